//! Exact lengths.
//!
//! Every distance that occurs in the structured models is the Euclidean
//! distance between points with rational coordinates, hence the square root
//! of a nonnegative rational. [`Dist`] stores that square. Comparisons,
//! sorting, and threshold tests are exact; a floating approximation is only
//! produced for display and reports.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::cmp::Ordering;
use std::fmt;

/// A nonnegative length, stored as its exact square.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Dist {
    sq: BigRational,
}

impl Dist {
    pub fn zero() -> Self {
        Dist { sq: BigRational::zero() }
    }

    /// Length given directly by a nonnegative rational value.
    pub fn from_value(v: &BigRational) -> Self {
        assert!(!v.is_negative(), "length must be nonnegative");
        Dist { sq: v * v }
    }

    /// Length given by its square.
    pub fn from_sq(sq: BigRational) -> Self {
        assert!(!sq.is_negative(), "squared length must be nonnegative");
        Dist { sq }
    }

    pub fn from_u64(v: u64) -> Self {
        let r = BigRational::from_integer(BigInt::from(v));
        Dist { sq: &r * &r }
    }

    /// Exact embedding of a float value (every finite f64 is rational).
    pub fn from_f64(v: f64) -> Option<Self> {
        if !v.is_finite() || v < 0.0 {
            return None;
        }
        BigRational::from_float(v).map(|r| Dist { sq: &r * &r })
    }

    pub fn sq(&self) -> &BigRational {
        &self.sq
    }

    pub fn is_zero(&self) -> bool {
        self.sq.is_zero()
    }

    /// Floating approximation of the length itself.
    pub fn approx(&self) -> f64 {
        ratio_to_f64(&self.sq).sqrt()
    }

    /// The exact rational value of the length, when the square root of the
    /// stored square is rational.
    pub fn as_value(&self) -> Option<BigRational> {
        rational_sqrt(&self.sq)
    }

    /// Sum of two lengths. Exact when both summands are rational; otherwise
    /// the sum is embedded through its floating approximation, which keeps
    /// the result deterministic but not exactly equal to the true sum.
    pub fn add(&self, other: &Dist) -> Dist {
        match (self.as_value(), other.as_value()) {
            (Some(a), Some(b)) => Dist::from_value(&(a + b)),
            _ => Dist::from_f64(self.approx() + other.approx()).expect("finite sum"),
        }
    }

    /// Scalar multiple by a nonnegative rational.
    pub fn scale(&self, c: &BigRational) -> Dist {
        assert!(!c.is_negative(), "scale factor must be nonnegative");
        Dist { sq: &self.sq * c * c }
    }

    /// Canonical text form: a decimal or fraction when the length is
    /// rational, otherwise `sqrt(q)` with `q` the exact square.
    pub fn exact_string(&self) -> String {
        match self.as_value() {
            Some(v) => rational_to_string(&v),
            None => format!("sqrt({})", rational_to_string(&self.sq)),
        }
    }

    /// Parse the canonical text form.
    pub fn parse(s: &str) -> Option<Dist> {
        let t = s.trim();
        if let Some(inner) = t.strip_prefix("sqrt(").and_then(|r| r.strip_suffix(')')) {
            let sq = parse_rational(inner)?;
            if sq.is_negative() {
                return None;
            }
            return Some(Dist::from_sq(sq));
        }
        let v = parse_rational(t)?;
        if v.is_negative() {
            return None;
        }
        Some(Dist::from_value(&v))
    }
}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sq.cmp(&other.sq)
    }
}

impl fmt::Debug for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dist({})", self.exact_string())
    }
}

impl fmt::Display for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.exact_string())
    }
}

impl Serialize for Dist {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = serializer.serialize_map(Some(2))?;
        m.serialize_entry("approx", &self.approx())?;
        m.serialize_entry("exact", &self.exact_string())?;
        m.end()
    }
}

impl<'de> Deserialize<'de> for Dist {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Num(f64),
            Obj { exact: String },
        }
        match Repr::deserialize(deserializer)? {
            Repr::Text(s) => Dist::parse(&s).ok_or_else(|| D::Error::custom(format!("bad length `{s}`"))),
            Repr::Num(v) => Dist::from_f64(v).ok_or_else(|| D::Error::custom("bad length value")),
            Repr::Obj { exact } => {
                Dist::parse(&exact).ok_or_else(|| D::Error::custom(format!("bad length `{exact}`")))
            }
        }
    }
}

/// A length extended with an infinity sentinel. Used for isolation margins of
/// sets with no exterior point and for covering radii of empty nets.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Extended {
    Finite(Dist),
    Infinite,
}

impl Extended {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Extended::Infinite)
    }

    /// Strict comparison against a finite threshold; infinity exceeds all.
    pub fn exceeds(&self, bound: &Dist) -> bool {
        match self {
            Extended::Finite(d) => d > bound,
            Extended::Infinite => true,
        }
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(d) => d.fmt(f),
            Extended::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self {
            Extended::Finite(d) => d.serialize(serializer),
            Extended::Infinite => {
                let mut m = serializer.serialize_map(Some(2))?;
                m.serialize_entry("approx", &Option::<f64>::None)?;
                m.serialize_entry("exact", "inf")?;
                m.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for Extended {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            #[serde(default)]
            approx: Option<f64>,
            exact: String,
        }
        let r = Repr::deserialize(deserializer)?;
        let _ = r.approx;
        if r.exact == "inf" {
            return Ok(Extended::Infinite);
        }
        Dist::parse(&r.exact)
            .map(Extended::Finite)
            .ok_or_else(|| D::Error::custom(format!("bad extended length `{}`", r.exact)))
    }
}

fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        let n = r.numer().to_f64().unwrap_or(f64::MAX);
        let d = r.denom().to_f64().unwrap_or(f64::MAX);
        n / d
    })
}

/// Square root of a rational when it is again rational.
fn rational_sqrt(q: &BigRational) -> Option<BigRational> {
    if q.is_negative() {
        return None;
    }
    let n = q.numer();
    let d = q.denom();
    let sn = n.sqrt();
    let sd = d.sqrt();
    if &(&sn * &sn) == n && &(&sd * &sd) == d {
        Some(BigRational::new(sn, sd))
    } else {
        None
    }
}

/// Render a rational as a terminating decimal when the reduced denominator is
/// 2^a 5^b, otherwise as `p/q`. Integers render without a point.
pub fn rational_to_string(r: &BigRational) -> String {
    let r = r.clone();
    if r.denom().is_one() {
        return r.numer().to_string();
    }
    let mut d = r.denom().clone();
    let mut twos = 0u32;
    let mut fives = 0u32;
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    while (&d % &two).is_zero() {
        d /= &two;
        twos += 1;
    }
    while (&d % &five).is_zero() {
        d /= &five;
        fives += 1;
    }
    if !d.is_one() {
        return format!("{}/{}", r.numer(), r.denom());
    }
    let digits = twos.max(fives);
    let scale = BigInt::from(10).pow(digits);
    let scaled = r.numer() * &scale / r.denom();
    let neg = scaled.is_negative();
    let body = scaled.abs().to_string();
    let body = if body.len() <= digits as usize {
        format!("{}{}", "0".repeat(digits as usize + 1 - body.len()), body)
    } else {
        body
    };
    let split = body.len() - digits as usize;
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    out.push_str(&body[..split]);
    out.push('.');
    out.push_str(&body[split..]);
    out
}

/// Parse a rational from `p/q`, an integer, or a decimal with optional
/// exponent. Decimal text converts exactly; no float rounding is involved.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    if let Some((p, q)) = t.split_once('/') {
        let num: BigInt = p.trim().parse().ok()?;
        let den: BigInt = q.trim().parse().ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(BigRational::new(num, den));
    }
    let (mantissa, exp) = match t.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().ok()?),
        None => (t, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    if frac_part.contains(['+', '-']) {
        return None;
    }
    let digits = format!("{}{}", int_part, frac_part);
    if digits.is_empty() || digits == "-" || digits == "+" {
        return None;
    }
    let num: BigInt = digits.parse().ok()?;
    let shift = frac_part.len() as i32 - exp;
    let ten = BigInt::from(10);
    Some(if shift >= 0 {
        BigRational::new(num, ten.pow(shift as u32))
    } else {
        BigRational::from_integer(num * ten.pow((-shift) as u32))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    #[test]
    fn ordering_is_exact_at_ties() {
        let sqrt2 = Dist::from_sq(rat("2"));
        let one = Dist::from_u64(1);
        let two = Dist::from_u64(2);
        assert!(one < sqrt2);
        assert!(sqrt2 < two);
        assert_eq!(sqrt2, Dist::from_sq(rat("2")));
    }

    #[test]
    fn rational_value_recovered() {
        let d = Dist::from_value(&rat("3/2"));
        assert_eq!(d.as_value(), Some(rat("3/2")));
        let irr = Dist::from_sq(rat("2"));
        assert_eq!(irr.as_value(), None);
    }

    #[test]
    fn addition_exact_for_rational_lengths() {
        let a = Dist::from_value(&rat("0.3"));
        let b = Dist::from_value(&rat("1"));
        let s = a.add(&b).add(&a);
        assert_eq!(s.as_value(), Some(rat("1.6")));
    }

    #[test]
    fn decimal_parsing_is_exact() {
        assert_eq!(rat("0.3"), BigRational::new(BigInt::from(3), BigInt::from(10)));
        assert_eq!(rat("-1.25"), BigRational::new(BigInt::from(-5), BigInt::from(4)));
        assert_eq!(rat("2e-3"), BigRational::new(BigInt::from(2), BigInt::from(1000)));
        assert_eq!(rat("12"), BigRational::from_integer(BigInt::from(12)));
        assert_eq!(rat("7/4"), BigRational::new(BigInt::from(7), BigInt::from(4)));
        assert!(parse_rational("1.2.3").is_none());
        assert!(parse_rational("").is_none());
        assert!(parse_rational("1/0").is_none());
    }

    #[test]
    fn rendering_round_trips() {
        for s in ["0.3", "2", "-7/3", "1.6", "0.125"] {
            let r = rat(s);
            assert_eq!(parse_rational(&rational_to_string(&r)).unwrap(), r);
        }
        assert_eq!(rational_to_string(&rat("1/3")), "1/3");
        assert_eq!(rational_to_string(&rat("0.3")), "0.3");
        assert_eq!(rational_to_string(&rat("-0.05")), "-0.05");
    }

    #[test]
    fn exact_string_round_trips_through_parse() {
        for d in [
            Dist::from_u64(3),
            Dist::from_value(&rat("0.3")),
            Dist::from_sq(rat("2")),
            Dist::from_sq(rat("13/4")),
        ] {
            assert_eq!(Dist::parse(&d.exact_string()).unwrap(), d);
        }
    }

    #[test]
    fn extended_margin_comparisons() {
        let m = Extended::Finite(Dist::from_u64(8));
        assert!(m.exceeds(&Dist::from_u64(4)));
        assert!(!m.exceeds(&Dist::from_u64(8)));
        assert!(Extended::Infinite.exceeds(&Dist::from_u64(1_000_000)));
    }

    #[test]
    fn serde_shape() {
        let d = Dist::from_sq(rat("2"));
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["exact"], "sqrt(2)");
        let back: Dist = serde_json::from_value(v).unwrap();
        assert_eq!(back, d);
        let e = Extended::Infinite;
        let v = serde_json::to_value(&e).unwrap();
        assert_eq!(v["exact"], "inf");
        assert_eq!(serde_json::from_value::<Extended>(v).unwrap(), Extended::Infinite);
    }
}
