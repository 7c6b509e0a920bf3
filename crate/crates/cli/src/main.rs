//! Command line front end for the coarse-rays library.
//!
//! Each subcommand wraps one library entry point and prints a single JSON
//! document: `analyze` decides the no-finite-components criterion alongside
//! the class report, `bm` produces the class report alone, `rays` and
//! `verify` synthesize and re-check ray witnesses, `net` samples a continuum
//! region and certifies a separated net, `transfer` moves a finite-component
//! certificate to a nearby model, and `mvn` and `wannier` build operator
//! certificates.
//!
//! Output conventions, kept stable so identical runs are byte-identical:
//!
//! * results go to stdout (or `--out FILE`) as pretty JSON with sorted keys;
//! * a refusal (ray synthesis or transfer) prints `{"refused": reason}` to
//!   stdout and exits 2;
//! * unusable input prints `{"error": {"kind", "message"}}` to stderr and
//!   exits 1.
//!
//! Exit codes: 0 when the run certifies a positive statement (criterion
//! satisfied, witness valid, net checks pass, transfer re-verified, operator
//! identities hold), 2 for a certified negative or a refusal, 3 for an
//! honest "inconclusive", 1 for unusable input or usage errors.

use clap::{Args, Parser, Subcommand};
use coarse_rays::bm_homology::{bm_h0, BmLimit};
use coarse_rays::coarse_transfer::{coarse_constant, transfer_finite_component};
use coarse_rays::dist::{parse_rational, rational_to_string, Dist};
use coarse_rays::net_builder::{
    build_net, check_net, sample_domain, DomainSample, DomainShape,
};
use coarse_rays::operator_witness::{
    build_wannier_isometry, frame_polar, mvn_shift_witness, Cell, DiscretizedSpace, WannierCenter,
};
use coarse_rays::ray_synthesis::{synthesize_ray_structure, validate_ray_structure, RayStructure};
use coarse_rays::rips::{decide_criterion_threads, Verdict};
use coarse_rays::space_models::model_from_json_str;
use coarse_rays::{Error, PointModel, Region};
use num_rational::BigRational;
use num_traits::One;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};
use std::process;

const EXIT_POSITIVE: i32 = 0;
const EXIT_ERROR: i32 = 1;
const EXIT_NEGATIVE: i32 = 2;
const EXIT_INCONCLUSIVE: i32 = 3;

/// Largest matrix dimension `--dump-matrices` will print.
const DUMP_LIMIT: usize = 200;

const WINDOW_HELP: &str = "Window region: `box:<min>:<max>` with comma-separated exact \
coordinates (box:-8,-8:8,8), `ball:<label>:<radius>`, `explicit:<label>;<label>;...`, or \
`@file.json` holding a region object. Defaults to a model-suggested region sized for the \
scale budget";

#[derive(Parser)]
#[command(
    name = "coarse-rays",
    version,
    about = "Multiscale component analysis, ray witnesses, and operator certificates \
             for discrete metric models"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decide whether some scale joins every point into infinite components,
    /// with the per-scale class report alongside.
    Analyze(AnalyzeArgs),
    /// Per-scale class report and its limit verdict alone.
    Bm(BmArgs),
    /// Synthesize a ray structure witness at one scale and re-check it.
    Rays(RaysArgs),
    /// Re-check a stored ray structure witness against a model.
    Verify(VerifyArgs),
    /// Sample a continuum region on a grid and certify a separated net.
    Net(NetArgs),
    /// Move a finite-component certificate to a nearby model.
    Transfer(TransferArgs),
    /// Exact shift-equivalence witness for a summable rank sequence.
    Mvn(MvnArgs),
    /// Localized isometry or frame-polar certificate from a discretization.
    Wannier(WannierArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Model description file
    #[arg(long)]
    model: PathBuf,
    /// Scale budget, an exact rational like `2` or `5/2`
    #[arg(long)]
    alpha_max: String,
    #[arg(long, help = WINDOW_HELP)]
    window: Option<String>,
    /// Worker threads for the per-scale scan
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Write the JSON result here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BmArgs {
    /// Model description file
    #[arg(long)]
    model: PathBuf,
    /// Scale budget, an exact rational
    #[arg(long)]
    alpha_max: String,
    #[arg(long, help = WINDOW_HELP)]
    window: Option<String>,
    /// Write the JSON result here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RaysArgs {
    /// Model description file
    #[arg(long)]
    model: PathBuf,
    /// Scale to build rays at: a rational or `sqrt(q)`
    #[arg(long)]
    alpha: String,
    #[arg(long, help = WINDOW_HELP)]
    window: Option<String>,
    /// Write the JSON result here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Model description file
    #[arg(long)]
    model: PathBuf,
    /// Ray structure file, as produced by `rays`
    #[arg(long)]
    witness: PathBuf,
    /// Write the JSON result here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NetArgs {
    /// Domain shape file: a JSON object tagged `shape`
    #[arg(long)]
    domain: PathBuf,
    /// Grid pitch for sampling the domain, an exact rational
    #[arg(long)]
    pitch: String,
    /// Separation radius for the net, an exact rational
    #[arg(long)]
    separation: String,
    /// Declare the sampled domain connected; connectivity of the net's 3r
    /// graph is then required for a passing exit
    #[arg(long)]
    declared_connected: bool,
    /// Also write the net as a finite cloud model file
    #[arg(long)]
    out_model: Option<PathBuf>,
    /// Write the JSON result here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TransferArgs {
    /// Source model description file
    #[arg(long)]
    model: PathBuf,
    /// Target model description file
    #[arg(long)]
    target: PathBuf,
    /// Source component labels, separated by `;`
    #[arg(long)]
    labels: String,
    /// Scale of the source certificate: a rational or `sqrt(q)`
    #[arg(long)]
    alpha: String,
    /// Covering constant to use directly: a rational or `sqrt(q)`
    #[arg(long)]
    constant: Option<String>,
    /// Measure the covering constant over this box region instead
    #[arg(long, help = "Measure the covering constant over this box region \
                        (same grammar as --window); requires --pad")]
    region: Option<String>,
    /// Give up on measuring if some point has no neighbour within this bound
    #[arg(long)]
    pad: Option<String>,
    /// Known bound folded into the measured constant
    #[arg(long)]
    declared_bound: Option<String>,
    /// Write the JSON result here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MvnArgs {
    /// Rank sequence, comma separated: `--ranks 1,0,2,1`
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    /// Draw a random rank sequence of this length instead
    #[arg(long, conflicts_with = "ranks")]
    sites: Option<usize>,
    /// Largest rank a random sequence may use
    #[arg(long, default_value_t = 3)]
    max_rank: usize,
    /// Seed for the random sequence
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fiber dimension per site and copy; defaults to the total rank
    #[arg(long)]
    fiber: Option<usize>,
    /// Include dense matrices in the output (small dimensions only)
    #[arg(long)]
    dump_matrices: bool,
    /// Write the JSON result here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WannierArgs {
    /// Input file with `cells`, `centers`, and optional `mode`, `lambda_min`
    #[arg(long)]
    spec: PathBuf,
    /// Use the frame-polar path even if the file says otherwise
    #[arg(long)]
    frame: bool,
    /// Eigenvalue floor for the frame path; falls back to the file's
    /// `lambda_min`, then the COARSE_RAYS_TOL environment variable, then 1e-8
    #[arg(long)]
    tol: Option<f64>,
    /// Include dense matrices in the output (small dimensions only)
    #[arg(long)]
    dump_matrices: bool,
    /// Write the JSON result here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_POSITIVE };
            let _ = e.print();
            process::exit(code);
        }
    };
    match run(cli.cmd) {
        Ok((value, out, code)) => {
            if let Err(e) = emit(&value, out.as_deref()) {
                report_error(&e);
                process::exit(EXIT_ERROR);
            }
            process::exit(code);
        }
        Err(e @ (Error::SynthesisRefused(_) | Error::TransferRefused(_))) => {
            print_stdout(&pretty(&json!({ "refused": e.to_string() })));
            process::exit(EXIT_NEGATIVE);
        }
        Err(e) => {
            report_error(&e);
            process::exit(EXIT_ERROR);
        }
    }
}

fn run(cmd: Cmd) -> Result<(Value, Option<PathBuf>, i32), Error> {
    match cmd {
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::Bm(a) => cmd_bm(a),
        Cmd::Rays(a) => cmd_rays(a),
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::Net(a) => cmd_net(a),
        Cmd::Transfer(a) => cmd_transfer(a),
        Cmd::Mvn(a) => cmd_mvn(a),
        Cmd::Wannier(a) => cmd_wannier(a),
    }
}

// ----------------------------------------------------------------------
// subcommands
// ----------------------------------------------------------------------

fn cmd_analyze(a: AnalyzeArgs) -> Result<(Value, Option<PathBuf>, i32), Error> {
    let model = load_model(&a.model)?;
    let alpha_max = rational_arg("--alpha-max", &a.alpha_max)?;
    let region = region_or_default(&model, a.window.as_deref(), &alpha_max)?;
    let window = model.enumerate_window(&region)?;
    let criterion = decide_criterion_threads(&model, &window, &alpha_max, a.threads)?;
    let bm = bm_h0(&model, &window, &alpha_max)?;
    let code = match &criterion.verdict {
        Verdict::Satisfied { .. } => EXIT_POSITIVE,
        Verdict::FailsPersistently { .. } => EXIT_NEGATIVE,
        Verdict::Inconclusive { .. } => EXIT_INCONCLUSIVE,
    };
    let value = json!({
        "command": "analyze",
        "model": a.model.display().to_string(),
        "alpha_max": rational_to_string(&alpha_max),
        "window": region,
        "criterion": criterion,
        "borel_moore": bm,
    });
    Ok((value, a.out, code))
}

fn cmd_bm(a: BmArgs) -> Result<(Value, Option<PathBuf>, i32), Error> {
    let model = load_model(&a.model)?;
    let alpha_max = rational_arg("--alpha-max", &a.alpha_max)?;
    let region = region_or_default(&model, a.window.as_deref(), &alpha_max)?;
    let window = model.enumerate_window(&region)?;
    let report = bm_h0(&model, &window, &alpha_max)?;
    let code = match &report.limit {
        BmLimit::Vanishes { .. } => EXIT_POSITIVE,
        BmLimit::Persists { .. } => EXIT_NEGATIVE,
        BmLimit::Undetermined { .. } => EXIT_INCONCLUSIVE,
    };
    let value = json!({
        "command": "bm",
        "model": a.model.display().to_string(),
        "alpha_max": rational_to_string(&alpha_max),
        "window": region,
        "report": report,
    });
    Ok((value, a.out, code))
}

fn cmd_rays(a: RaysArgs) -> Result<(Value, Option<PathBuf>, i32), Error> {
    let model = load_model(&a.model)?;
    let alpha = dist_arg("--alpha", &a.alpha)?;
    let region = region_or_default(&model, a.window.as_deref(), &scale_budget(&alpha))?;
    let window = model.enumerate_window(&region)?;
    let structure = synthesize_ray_structure(&model, &window, &alpha)?;
    let validation = validate_ray_structure(&model, &structure)?;
    let code = if validation.ok { EXIT_POSITIVE } else { EXIT_NEGATIVE };
    let value = json!({
        "command": "rays",
        "model": a.model.display().to_string(),
        "structure": structure,
        "validation": validation,
    });
    Ok((value, a.out, code))
}

fn cmd_verify(a: VerifyArgs) -> Result<(Value, Option<PathBuf>, i32), Error> {
    let model = load_model(&a.model)?;
    let text = read_text(&a.witness, "witness file")?;
    let structure: RayStructure = serde_json::from_str(&text).map_err(|e| {
        Error::InvalidInput(format!("witness file `{}`: {e}", a.witness.display()))
    })?;
    let validation = validate_ray_structure(&model, &structure)?;
    let code = if validation.ok { EXIT_POSITIVE } else { EXIT_NEGATIVE };
    let value = json!({
        "command": "verify",
        "model": a.model.display().to_string(),
        "witness": a.witness.display().to_string(),
        "validation": validation,
    });
    Ok((value, a.out, code))
}

fn cmd_net(a: NetArgs) -> Result<(Value, Option<PathBuf>, i32), Error> {
    let text = read_text(&a.domain, "domain file")?;
    let shape: DomainShape = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("domain file `{}`: {e}", a.domain.display())))?;
    let pitch = rational_arg("--pitch", &a.pitch)?;
    let separation = rational_arg("--separation", &a.separation)?;
    let domain = sample_domain(&shape, &pitch, a.declared_connected)?;
    let net = build_net(&domain, &separation)?;
    let report = check_net(&net, &domain, &separation)?;
    let pass = report.separation_ok
        && report.covering_ok
        && report.maximal
        && (!report.declared_connected || report.connectivity_3r_ok);
    let mut value = json!({
        "command": "net",
        "domain": a.domain.display().to_string(),
        "pitch": rational_to_string(&pitch),
        "separation": rational_to_string(&separation),
        "sample_size": domain.points.len(),
        "net": net,
        "report": report,
    });
    if let Some(path) = &a.out_model {
        let model = finite_cloud_json(&domain, &net);
        write_text(path, &pretty(&model))?;
        let obj = value.as_object_mut().expect("net output is an object");
        obj.insert("model_written".into(), json!(path.display().to_string()));
    }
    let code = if pass { EXIT_POSITIVE } else { EXIT_NEGATIVE };
    Ok((value, a.out, code))
}

fn cmd_transfer(a: TransferArgs) -> Result<(Value, Option<PathBuf>, i32), Error> {
    let source = load_model(&a.model)?;
    let target = load_model(&a.target)?;
    let labels: Vec<String> = a
        .labels
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    if labels.is_empty() {
        return Err(Error::InvalidInput("--labels lists no component labels".into()));
    }
    let alpha = dist_arg("--alpha", &a.alpha)?;
    let constant = match (&a.constant, &a.region) {
        (Some(c), None) => dist_arg("--constant", c)?,
        (None, Some(region_spec)) => {
            let region = parse_region(region_spec)?;
            let pad_text = a.pad.as_deref().ok_or_else(|| {
                Error::InvalidInput("measuring a constant with --region needs --pad".into())
            })?;
            let pad = rational_arg("--pad", pad_text)?;
            let declared = match &a.declared_bound {
                Some(s) => Some(rational_arg("--declared-bound", s)?),
                None => None,
            };
            coarse_constant(&source, &target, &region, &pad, declared.as_ref())?
        }
        (Some(_), Some(_)) => {
            return Err(Error::InvalidInput(
                "give either --constant or --region, not both".into(),
            ))
        }
        (None, None) => {
            return Err(Error::InvalidInput(
                "a covering constant is needed: pass --constant, or measure one \
                 with --region and --pad"
                    .into(),
            ))
        }
    };
    let report = transfer_finite_component(&source, &target, &labels, &alpha, &constant)?;
    let value = json!({
        "command": "transfer",
        "source": a.model.display().to_string(),
        "target": a.target.display().to_string(),
        "report": report,
    });
    Ok((value, a.out, EXIT_POSITIVE))
}

fn cmd_mvn(a: MvnArgs) -> Result<(Value, Option<PathBuf>, i32), Error> {
    let ranks: Vec<usize> = match (a.ranks, a.sites) {
        (Some(ranks), _) => ranks,
        (None, Some(sites)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            (0..sites).map(|_| rng.gen_range(0..=a.max_rank)).collect()
        }
        (None, None) => {
            return Err(Error::InvalidInput(
                "give a rank sequence with --ranks, or --sites for a random one".into(),
            ))
        }
    };
    let fiber = a.fiber.unwrap_or_else(|| ranks.iter().sum::<usize>().max(1));
    let witness = mvn_shift_witness(&ranks, fiber)?;
    let mut value = json!({
        "command": "mvn",
        "witness": witness,
    });
    if a.dump_matrices {
        let dim = witness.dim();
        if dim > DUMP_LIMIT {
            return Err(Error::InvalidInput(format!(
                "--dump-matrices is limited to dimension {DUMP_LIMIT}, got {dim}"
            )));
        }
        let t: Vec<Vec<i64>> = witness
            .dense_t()
            .row_iter()
            .map(|row| row.iter().copied().collect())
            .collect();
        let obj = value.as_object_mut().expect("mvn output is an object");
        obj.insert(
            "matrices".into(),
            json!({
                "t": t,
                "p_diag": witness.p_diag(),
                "q_diag": witness.q_diag(),
            }),
        );
    }
    Ok((value, a.out, EXIT_POSITIVE))
}

#[derive(Deserialize)]
struct WannierSpec {
    cells: Vec<Cell>,
    centers: Vec<WannierCenter>,
    #[serde(default)]
    mode: Option<String>,
    #[serde(default)]
    lambda_min: Option<f64>,
}

fn cmd_wannier(a: WannierArgs) -> Result<(Value, Option<PathBuf>, i32), Error> {
    let text = read_text(&a.spec, "input file")?;
    let spec: WannierSpec = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("input file `{}`: {e}", a.spec.display())))?;
    let mode = if a.frame {
        "frame".to_string()
    } else {
        spec.mode.clone().unwrap_or_else(|| "isometry".into())
    };
    let space = DiscretizedSpace::new(spec.cells)?;
    if a.dump_matrices && space.len() > DUMP_LIMIT {
        return Err(Error::InvalidInput(format!(
            "--dump-matrices is limited to dimension {DUMP_LIMIT}, got {}",
            space.len()
        )));
    }
    let value = match mode.as_str() {
        "isometry" => {
            let build = build_wannier_isometry(&space, &spec.centers)?;
            let mut value = json!({
                "command": "wannier",
                "mode": "isometry",
                "certificate": build.certificate,
                "propagation": build.propagation,
                "max_support_diameter": build.max_support_diameter,
            });
            if a.dump_matrices {
                let obj = value.as_object_mut().expect("wannier output is an object");
                obj.insert(
                    "matrices".into(),
                    json!({
                        "u": matrix_rows(&build.u),
                        "projection": matrix_rows(&build.projection),
                    }),
                );
            }
            value
        }
        "frame" => {
            let floor = a
                .tol
                .or(spec.lambda_min)
                .or_else(|| {
                    std::env::var("COARSE_RAYS_TOL").ok().and_then(|s| s.parse().ok())
                })
                .unwrap_or(1e-8);
            let build = frame_polar(&space, &spec.centers, floor)?;
            let mut value = json!({
                "command": "wannier",
                "mode": "frame",
                "certificate": build.certificate,
                "min_eigenvalue": build.min_eigenvalue,
                "propagation": build.propagation,
                "max_support_diameter": build.max_support_diameter,
            });
            if a.dump_matrices {
                let obj = value.as_object_mut().expect("wannier output is an object");
                obj.insert(
                    "matrices".into(),
                    json!({
                        "v": matrix_rows(&build.v),
                        "w": matrix_rows(&build.w),
                        "gram": matrix_rows(&build.gram),
                        "projection": matrix_rows(&build.projection),
                    }),
                );
            }
            value
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown mode `{other}`; use `isometry` or `frame`"
            )))
        }
    };
    Ok((value, a.out, EXIT_POSITIVE))
}

// ----------------------------------------------------------------------
// shared plumbing
// ----------------------------------------------------------------------

fn load_model(path: &Path) -> Result<PointModel, Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::ModelFile(format!("`{}`: {e}", path.display())))?;
    model_from_json_str(&text)
}

fn read_text(path: &Path, what: &str) -> Result<String, Error> {
    fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("{what} `{}`: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, format!("{text}\n"))
        .map_err(|e| Error::InvalidInput(format!("cannot write `{}`: {e}", path.display())))
}

fn rational_arg(name: &str, text: &str) -> Result<BigRational, Error> {
    parse_rational(text).ok_or_else(|| {
        Error::InvalidInput(format!("{name} is not an exact rational: `{text}`"))
    })
}

fn dist_arg(name: &str, text: &str) -> Result<Dist, Error> {
    Dist::parse(text).ok_or_else(|| {
        Error::InvalidInput(format!(
            "{name} is not a distance: `{text}` (use a rational or `sqrt(q)`)"
        ))
    })
}

/// A rational scale budget covering a distance, used only to size default
/// windows: the value itself when rational, otherwise `ceil` of the square
/// (an upper bound, since `x <= x^2` rounds up past any `x >= 1`).
fn scale_budget(alpha: &Dist) -> BigRational {
    match alpha.as_value() {
        Some(v) => v,
        None => {
            let c = alpha.sq().ceil();
            if c >= BigRational::one() {
                c
            } else {
                BigRational::one()
            }
        }
    }
}

fn region_or_default(
    model: &PointModel,
    spec: Option<&str>,
    budget: &BigRational,
) -> Result<Region, Error> {
    match spec {
        Some(s) => parse_region(s),
        None => Ok(model.suggest_window(budget)),
    }
}

fn parse_region(spec: &str) -> Result<Region, Error> {
    if let Some(path) = spec.strip_prefix('@') {
        let text = read_text(Path::new(path), "region file")?;
        return serde_json::from_str(&text)
            .map_err(|e| Error::InvalidRegion(format!("region file `{path}`: {e}")));
    }
    if let Some(rest) = spec.strip_prefix("box:") {
        let (lo, hi) = rest.split_once(':').ok_or_else(|| {
            Error::InvalidRegion(format!("box window is `box:<min>:<max>`, got `{spec}`"))
        })?;
        return Ok(Region::Box { min: parse_coords(lo)?, max: parse_coords(hi)? });
    }
    if let Some(rest) = spec.strip_prefix("ball:") {
        let (center, radius) = rest.rsplit_once(':').ok_or_else(|| {
            Error::InvalidRegion(format!(
                "ball window is `ball:<label>:<radius>`, got `{spec}`"
            ))
        })?;
        return Ok(Region::Ball {
            center: center.to_string(),
            radius: rational_arg("ball radius", radius)?,
        });
    }
    if let Some(rest) = spec.strip_prefix("explicit:") {
        let labels: Vec<String> = rest
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        return Ok(Region::Explicit { labels });
    }
    Err(Error::InvalidRegion(format!(
        "unrecognized window `{spec}`; use box:<min>:<max>, ball:<label>:<radius>, \
         explicit:<l1>;<l2>, or @<file>"
    )))
}

fn parse_coords(text: &str) -> Result<Vec<BigRational>, Error> {
    text.split(',').map(|c| rational_arg("window coordinate", c.trim())).collect()
}

fn finite_cloud_json(domain: &DomainSample, net: &[usize]) -> Value {
    let points: Vec<Value> = net
        .iter()
        .enumerate()
        .map(|(a, &i)| {
            json!({
                "label": format!("n{a}"),
                "coords": domain.points[i].iter().map(rational_to_string).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({ "kind": "finite_cloud", "params": { "points": points } })
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|row| row.iter().copied().collect()).collect()
}

fn pretty(value: &Value) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize")
}

fn emit(value: &Value, out: Option<&Path>) -> Result<(), Error> {
    let text = pretty(value);
    match out {
        Some(path) => write_text(path, &text),
        None => {
            print_stdout(&text);
            Ok(())
        }
    }
}

/// Print a line to stdout; a closed pipe ends the run quietly instead of
/// panicking, any other write failure is fatal.
fn print_stdout(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(e) = writeln!(out, "{text}") {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            return;
        }
        eprintln!("cannot write to stdout: {e}");
        process::exit(EXIT_ERROR);
    }
}

fn report_error(e: &Error) {
    let obj = json!({ "error": { "kind": error_kind(e), "message": e.to_string() } });
    eprintln!("{}", pretty(&obj));
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::UnknownLabel(_) => "unknown_label",
        Error::InvalidRegion(_) => "invalid_region",
        Error::WindowTooLarge(..) => "window_too_large",
        Error::EmptyWindow => "empty_window",
        Error::InvalidModel(_) => "invalid_model",
        Error::InvalidInput(_) => "invalid_input",
        Error::ContractViolation(_) => "contract_violation",
        Error::SynthesisRefused(_) => "synthesis_refused",
        Error::TransferRefused(_) => "transfer_refused",
        Error::OperatorInput(_) => "operator_input",
        Error::ModelFile(_) => "model_file",
    }
}
