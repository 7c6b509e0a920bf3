//! Construction and validation of ray structures.
//!
//! A ray structure decomposes a space, at a scale `alpha`, into ordered rays:
//! sequences with consecutive steps bounded by a constant, each continuing to
//! infinity by a symbolic rule. Revisits are allowed through clone points,
//! written `label~k`, which sit at the position of their base point; the
//! projection that forgets clones moves nothing and repeats each point a
//! bounded number of times, so the structure describes a space
//! indistinguishable from the model at large scale.
//!
//! Synthesis walks a breadth-first spanning tree of each certified-infinite
//! component and peels it into rays: the walk follows marked branches (those
//! leading to a continuation candidate on the window rim), splices finite
//! side branches in place as double walks (down and back, cloning on the way
//! back), and starts a new ray at every other marked branch. The listed
//! prefixes are then pumped with genuine model points from the continuation
//! tails until they are long relative to the window, and each ray ends with
//! its continuation rule.
//!
//! The validator re-derives every claim from the model: partition of the
//! window, step bounds, tail validity, tail disjointness, clone placement,
//! multiplicity, and (when claimed) coverage of the full model.

use crate::dist::Dist;
use crate::rips::{build_rips, classify_components, ClassifiedComponent, ComponentStatus};
use crate::space_models::{root_norm, ContinuationRule, PointModel, Region, Site, Window};
use crate::union_find::DisjointSet;
use crate::{Error, Result};
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// One step of a peeled walk: a first visit or a revisit (clone).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RayVisit {
    Original(usize),
    Clone(usize),
}

impl RayVisit {
    pub fn vertex(&self) -> usize {
        match self {
            RayVisit::Original(v) | RayVisit::Clone(v) => *v,
        }
    }
}

/// A peeled walk over tree vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexRay {
    pub visits: Vec<RayVisit>,
}

/// A finite tree given explicitly, for the abstract peeling operation.
#[derive(Clone, Debug)]
pub struct FiniteTree {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub root: usize,
}

/// Peel a finite tree into walks: each walk ends at a marked vertex, every
/// vertex appears as an original exactly once, consecutive visits are
/// adjacent in the tree, and no vertex is visited more than its degree plus
/// one times. Fails when no vertex is marked: a tree with no marked vertex
/// describes a finite component and cannot carry a ray.
pub fn tree_to_rays(tree: &FiniteTree, marked: &[bool]) -> Result<Vec<IndexRay>> {
    if tree.n == 0 {
        return Err(Error::InvalidInput("empty tree".into()));
    }
    if marked.len() != tree.n {
        return Err(Error::InvalidInput("mark vector length mismatch".into()));
    }
    if tree.root >= tree.n {
        return Err(Error::InvalidInput("root out of range".into()));
    }
    if tree.edges.len() != tree.n - 1 {
        return Err(Error::InvalidInput("a tree on n vertices has n - 1 edges".into()));
    }
    let mut ds = DisjointSet::new(tree.n);
    let mut adj = vec![Vec::new(); tree.n];
    for &(u, v) in &tree.edges {
        if u >= tree.n || v >= tree.n || u == v {
            return Err(Error::InvalidInput(format!("bad edge ({u}, {v})")));
        }
        if !ds.union(u, v) {
            return Err(Error::InvalidInput("edges contain a cycle".into()));
        }
        adj[u].push(v);
        adj[v].push(u);
    }
    for a in &mut adj {
        a.sort();
    }
    peel(&adj, tree.root, marked)
}

/// Core peeling walk over a rooted tree given by sorted adjacency lists.
fn peel(adj: &[Vec<usize>], root: usize, marked: &[bool]) -> Result<Vec<IndexRay>> {
    let n = adj.len();
    let mut parent = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                parent[w] = v;
                queue.push_back(w);
            }
        }
    }
    if order.len() != n {
        return Err(Error::InvalidInput("tree is not connected".into()));
    }
    let mut kids = vec![Vec::new(); n];
    for &v in &order {
        if parent[v] != usize::MAX {
            kids[parent[v]].push(v);
        }
    }
    // Sorted adjacency and BFS discovery keep each kids list sorted.
    let mut has_mark = marked.to_vec();
    for &v in order.iter().rev() {
        if parent[v] != usize::MAX && has_mark[v] {
            has_mark[parent[v]] = true;
        }
    }
    if !has_mark[root] {
        return Err(Error::SynthesisRefused(
            "no marked vertex: the tree describes a finite component".into(),
        ));
    }
    let mut rays = Vec::new();
    let mut starts = VecDeque::from([root]);
    while let Some(start) = starts.pop_front() {
        let mut visits = Vec::new();
        let mut cur = start;
        loop {
            visits.push(RayVisit::Original(cur));
            let mut continue_to: Option<usize> = None;
            for &c in &kids[cur] {
                if !has_mark[c] {
                    euler_tour(&kids, c, &mut visits);
                    visits.push(RayVisit::Clone(cur));
                } else if continue_to.is_none() {
                    continue_to = Some(c);
                } else {
                    starts.push_back(c);
                }
            }
            match continue_to {
                Some(next) => cur = next,
                None => {
                    debug_assert!(marked[cur], "walk ended at an unmarked vertex");
                    break;
                }
            }
        }
        rays.push(IndexRay { visits });
    }
    Ok(rays)
}

/// Double walk of the subtree rooted at `start`: visit down, clone back.
fn euler_tour(kids: &[Vec<usize>], start: usize, out: &mut Vec<RayVisit>) {
    struct Frame<'a> {
        v: usize,
        children: &'a [usize],
        next: usize,
    }
    out.push(RayVisit::Original(start));
    let mut stack = vec![Frame { v: start, children: &kids[start], next: 0 }];
    while let Some(top) = stack.last_mut() {
        if top.next < top.children.len() {
            let c = top.children[top.next];
            top.next += 1;
            out.push(RayVisit::Original(c));
            stack.push(Frame { v: c, children: &kids[c], next: 0 });
        } else {
            stack.pop();
            if let Some(parent_frame) = stack.last() {
                out.push(RayVisit::Clone(parent_frame.v));
            }
        }
    }
}

/// Symbolic continuation of a listed ray.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Continuation {
    /// Label of the model point the tail starts from: the base of the last
    /// listed point.
    pub anchor: String,
    pub rule: ContinuationRule,
}

/// One ray: listed points (clones written `label~k`) and how it continues.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ray {
    pub points: Vec<String>,
    pub continuation: Option<Continuation>,
}

/// A checkable ray decomposition of a model at a scale.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RayStructure {
    pub alpha: Dist,
    /// Bound on every consecutive step, listed or along a tail.
    pub lipschitz_c: Dist,
    /// Bound on how often any one model point appears (original plus
    /// clones); the projection forgetting clones is at most this-to-one.
    pub multiplicity_bound: usize,
    /// Whether the originals plus the continuation tails provably cover
    /// every point of the model.
    pub covers_model: bool,
    pub window: Region,
    pub rays: Vec<Ray>,
}

/// Split a listed label into its base and whether it is a clone.
fn split_label(label: &str) -> (&str, bool) {
    match label.split_once('~') {
        Some((base, _)) => (base, true),
        None => (label, false),
    }
}

/// Build a ray structure covering the whole window. Every component of the
/// windowed graph at `alpha` must be certified infinite.
pub fn synthesize_ray_structure(
    model: &PointModel,
    window: &Window,
    alpha: &Dist,
) -> Result<RayStructure> {
    let comps = classify_components(model, window, alpha)?;
    let finite = comps
        .iter()
        .filter(|c| matches!(c.status, ComponentStatus::CertifiedFinite { .. }))
        .count();
    let unknown = comps
        .iter()
        .filter(|c| matches!(c.status, ComponentStatus::Unknown { .. }))
        .count();
    if finite + unknown > 0 {
        return Err(Error::SynthesisRefused(format!(
            "rays exist only when every component is infinite: {finite} certified finite \
             and {unknown} unclassified component(s) at this scale"
        )));
    }
    let keep: Vec<usize> = (0..comps.len()).collect();
    synthesize_inner(model, window, alpha, &comps, &keep)
}

/// Build rays for selected components only (indices into the classification
/// at `alpha`). Each selected component must be certified infinite; finite
/// companions can be merged in afterwards with [`attach_finite`].
pub fn synthesize_for_components(
    model: &PointModel,
    window: &Window,
    alpha: &Dist,
    keep: &[usize],
) -> Result<RayStructure> {
    let comps = classify_components(model, window, alpha)?;
    for &i in keep {
        let comp = comps
            .get(i)
            .ok_or_else(|| Error::InvalidInput(format!("no component with index {i}")))?;
        if !matches!(comp.status, ComponentStatus::CertifiedInfinite { .. }) {
            return Err(Error::SynthesisRefused(format!(
                "component {i} is not certified infinite"
            )));
        }
    }
    synthesize_inner(model, window, alpha, &comps, keep)
}

fn synthesize_inner(
    model: &PointModel,
    window: &Window,
    alpha: &Dist,
    comps: &[ClassifiedComponent],
    keep: &[usize],
) -> Result<RayStructure> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let graph = build_rips(model, window, alpha);
    let candidates: BTreeMap<usize, ContinuationRule> =
        model.continuation_candidates(window).into_iter().collect();
    let mut index_rays: Vec<Vec<RayVisit>> = Vec::new();
    for &ci in keep {
        let members = &comps[ci].members;
        let local: BTreeMap<usize, usize> =
            members.iter().enumerate().map(|(l, &w)| (w, l)).collect();
        let root_w = *members
            .iter()
            .min_by_key(|&&w| (root_norm(window.site(w)), w))
            .expect("components are nonempty");
        // Breadth-first spanning tree of the component.
        let m = members.len();
        let mut tree_adj: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut seen = vec![false; m];
        let root_l = local[&root_w];
        seen[root_l] = true;
        let mut queue = VecDeque::from([root_l]);
        while let Some(v) = queue.pop_front() {
            for &nb_w in graph.neighbors(members[v]) {
                if let Some(&nb_l) = local.get(&nb_w) {
                    if !seen[nb_l] {
                        seen[nb_l] = true;
                        tree_adj[v].push(nb_l);
                        tree_adj[nb_l].push(v);
                        queue.push_back(nb_l);
                    }
                }
            }
        }
        for a in &mut tree_adj {
            a.sort();
        }
        let marked: Vec<bool> =
            members.iter().map(|w| candidates.contains_key(w)).collect();
        if !marked.iter().any(|&b| b) {
            return Err(Error::SynthesisRefused(
                "a component has no continuation candidate; enlarge the window".into(),
            ));
        }
        let rays = peel(&tree_adj, root_l, &marked)?;
        for r in rays {
            index_rays.push(
                r.visits
                    .into_iter()
                    .map(|v| match v {
                        RayVisit::Original(l) => RayVisit::Original(members[l]),
                        RayVisit::Clone(l) => RayVisit::Clone(members[l]),
                    })
                    .collect(),
            );
        }
    }
    // Pump listed prefixes with tail points until each ray is long relative
    // to the window.
    let target_len = match window.diameter(model) {
        Some(d) if alpha.approx() > 0.0 => {
            ((2.0 * d.approx() / alpha.approx()).ceil() as usize).min(10_000)
        }
        _ => 0,
    };
    let mut rays = Vec::with_capacity(index_rays.len());
    let mut max_step = alpha.clone();
    let mut tails: Vec<(Site, ContinuationRule)> = Vec::new();
    let mut originals: BTreeSet<Site> = BTreeSet::new();
    let mut visit_counts: BTreeMap<String, usize> = BTreeMap::new();
    for visits in &index_rays {
        let mut points: Vec<String> = Vec::with_capacity(visits.len());
        let mut sites: Vec<Site> = Vec::with_capacity(visits.len());
        let mut clone_counters: BTreeMap<usize, usize> = BTreeMap::new();
        for v in visits {
            let w = v.vertex();
            let base = window.label(w);
            match v {
                RayVisit::Original(_) => points.push(base.to_string()),
                RayVisit::Clone(_) => {
                    let c = clone_counters.entry(w).or_insert(0);
                    *c += 1;
                    points.push(format!("{base}~{c}"));
                }
            }
            sites.push(window.site(w).clone());
        }
        let end_w = visits.last().expect("rays are nonempty").vertex();
        let rule = candidates
            .get(&end_w)
            .expect("walks end at marked vertices")
            .clone();
        let mut anchor_site = window.site(end_w).clone();
        while points.len() < target_len {
            let batch = target_len - points.len();
            let tail = model.tail_points(&anchor_site, &rule, batch)?;
            for t in &tail {
                points.push(model.label_of(t));
                sites.push(t.clone());
            }
            anchor_site = tail.last().expect("tail batches are nonempty").clone();
        }
        for (label, site) in points.iter().zip(&sites) {
            let (base, is_clone) = split_label(label);
            *visit_counts.entry(base.to_string()).or_insert(0) += 1;
            if !is_clone {
                originals.insert(site.clone());
            }
        }
        for pair in sites.windows(2) {
            let step = model.site_distance(&pair[0], &pair[1]);
            if step > max_step {
                max_step = step;
            }
        }
        let anchor = model.label_of(&anchor_site);
        tails.push((anchor_site, rule.clone()));
        rays.push(Ray { points, continuation: Some(Continuation { anchor, rule }) });
    }
    let covers_model = coverage_certified(model, &originals, &tails);
    let multiplicity_bound = visit_counts.values().copied().max().unwrap_or(0);
    Ok(RayStructure {
        alpha: alpha.clone(),
        lipschitz_c: max_step,
        multiplicity_bound,
        covers_model,
        window: window.region().clone(),
        rays,
    })
}

/// Whether a declared tail passes through a given model point.
fn tail_contains(anchor: &Site, rule: &ContinuationRule, site: &Site) -> bool {
    match (rule, anchor, site) {
        (ContinuationRule::AxisTail { axis, sign }, Site::Lattice(a), Site::Lattice(q)) => {
            q.len() == a.len()
                && q.iter().enumerate().all(|(j, v)| j == *axis || *v == a[j])
                && (q[*axis] - a[*axis]) * (*sign as i64) > 0
        }
        (ContinuationRule::WedgeTail, Site::Wedge { ray: ar, k: ak }, Site::Wedge { ray, k }) => {
            ray == ar && k > ak
        }
        (
            ContinuationRule::ClusterTail,
            Site::Cluster { n: an, i: ai },
            Site::Cluster { n, i },
        ) => (*n, *i) > (*an, *ai),
        _ => false,
    }
}

/// Whether the original points plus the tails provably cover every model
/// point. Only model kinds whose points are linearly ordered beyond a finite
/// core admit this certificate.
fn coverage_certified(
    model: &PointModel,
    originals: &BTreeSet<Site>,
    tails: &[(Site, ContinuationRule)],
) -> bool {
    const CAP: u64 = 1_000_000;
    match model.kind_name() {
        "finite_cloud" => {
            // Enumerate the whole model and compare.
            match model.enumerate_window(&model.suggest_window(&BigRational::zero())) {
                Ok(w) => w.sites.iter().all(|s| originals.contains(s)),
                Err(_) => false,
            }
        }
        "lattice" | "lattice_with_defects" => {
            if model.dim() != 1 {
                return false;
            }
            let xs: Vec<i64> = originals
                .iter()
                .filter_map(|s| match s {
                    Site::Lattice(ks) => Some(ks[0]),
                    _ => None,
                })
                .collect();
            let (Some(&m), Some(&mx)) = (xs.iter().min(), xs.iter().max()) else {
                return false;
            };
            if (mx - m) as u64 > CAP {
                return false;
            }
            for x in m..=mx {
                let site = Site::Lattice(vec![x]);
                if model.contains_site(&site) && !originals.contains(&site) {
                    return false;
                }
            }
            // Every added point must be listed; tails contain lattice sites
            // only.
            let mut i = 0u32;
            loop {
                let site = Site::Added(i);
                if !model.contains_site(&site) {
                    break;
                }
                if !originals.contains(&site) {
                    return false;
                }
                i += 1;
            }
            let minus_ok = tails.iter().any(|(a, r)| {
                matches!(r, ContinuationRule::AxisTail { axis: 0, sign: -1 })
                    && matches!(a, Site::Lattice(ks) if ks[0] >= m)
            });
            let plus_ok = tails.iter().any(|(a, r)| {
                matches!(r, ContinuationRule::AxisTail { axis: 0, sign: 1 })
                    && matches!(a, Site::Lattice(ks) if ks[0] <= mx)
            });
            minus_ok && plus_ok
        }
        "cluster_sequence" => {
            let best = tails
                .iter()
                .filter_map(|(a, r)| match (a, r) {
                    (Site::Cluster { n, i }, ContinuationRule::ClusterTail) => Some((*n, *i)),
                    _ => None,
                })
                .max();
            let Some((n0, i0)) = best else { return false };
            if n0 > CAP {
                return false;
            }
            for n in 1..=n0 {
                let len = model.cluster_template(n).len() as u32;
                let top = if n == n0 { i0 } else { len - 1 };
                for i in 0..=top {
                    if !originals.contains(&Site::Cluster { n, i }) {
                        return false;
                    }
                }
            }
            true
        }
        "wedge_of_rays" => {
            let mut ray = 0u32;
            loop {
                let base = Site::Wedge { ray, k: 0 };
                if !model.contains_site(&base) {
                    break;
                }
                let k_r = tails
                    .iter()
                    .filter_map(|(a, r)| match (a, r) {
                        (Site::Wedge { ray: ar, k }, ContinuationRule::WedgeTail)
                            if *ar == ray =>
                        {
                            Some(*k)
                        }
                        _ => None,
                    })
                    .max();
                let Some(k_r) = k_r else { return false };
                if k_r > CAP {
                    return false;
                }
                for k in 0..=k_r {
                    if !originals.contains(&Site::Wedge { ray, k }) {
                        return false;
                    }
                }
                ray += 1;
            }
            true
        }
        _ => false,
    }
}

/// Result of checking a ray structure against its model.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub checks: Vec<String>,
    pub failures: Vec<String>,
}

/// Re-derive every claim of a ray structure from the model. Logical defects
/// are reported, not raised; errors are reserved for inputs that cannot be
/// interpreted at all.
pub fn validate_ray_structure(model: &PointModel, s: &RayStructure) -> Result<ValidationReport> {
    let window = model.enumerate_window(&s.window)?;
    let mut failures = Vec::new();
    let mut checks = Vec::new();

    // Resolve all points; collect originals.
    struct Parsed {
        base_label: String,
        site: Site,
        is_clone: bool,
    }
    let mut parsed_rays: Vec<Vec<Parsed>> = Vec::new();
    for (ri, ray) in s.rays.iter().enumerate() {
        let mut out = Vec::new();
        for label in &ray.points {
            let (base, is_clone) = split_label(label);
            match model.resolve(base) {
                Ok(site) => out.push(Parsed {
                    base_label: base.to_string(),
                    site,
                    is_clone,
                }),
                Err(_) => failures.push(format!("ray {ri}: `{label}` is not a model point")),
            }
        }
        if out.is_empty() {
            failures.push(format!("ray {ri} lists no points"));
        }
        parsed_rays.push(out);
    }

    // Partition: originals pairwise distinct across the structure.
    let mut originals: BTreeSet<Site> = BTreeSet::new();
    let mut visit_counts: BTreeMap<String, usize> = BTreeMap::new();
    for (ri, ray) in parsed_rays.iter().enumerate() {
        let mut seen_labels: BTreeSet<String> = BTreeSet::new();
        let mut earlier_originals: BTreeSet<String> = BTreeSet::new();
        for (pi, p) in ray.iter().enumerate() {
            let label = &s.rays[ri].points[pi];
            if !seen_labels.insert(label.clone()) {
                failures.push(format!("ray {ri}: `{label}` listed twice"));
            }
            *visit_counts.entry(p.base_label.clone()).or_insert(0) += 1;
            if p.is_clone {
                if !earlier_originals.contains(&p.base_label) {
                    failures.push(format!(
                        "ray {ri}: clone `{label}` has no earlier original in the same ray"
                    ));
                }
            } else {
                if !originals.insert(p.site.clone()) {
                    failures.push(format!(
                        "`{}` appears as an original more than once",
                        p.base_label
                    ));
                }
                earlier_originals.insert(p.base_label.clone());
            }
        }
    }
    if failures.is_empty() {
        checks.push(format!("{} originals are pairwise distinct", originals.len()));
    }

    // Window coverage on the truncation.
    let mut missing = 0usize;
    for i in 0..window.len() {
        if !originals.contains(window.site(i)) {
            failures.push(format!("window point `{}` is not covered", window.label(i)));
            missing += 1;
            if missing >= 5 {
                failures.push("further coverage failures suppressed".into());
                break;
            }
        }
    }
    if missing == 0 {
        checks.push(format!("all {} window points are covered", window.len()));
    }

    // Step bounds, clones placed at their base.
    let mut worst: Option<Dist> = None;
    for (ri, ray) in parsed_rays.iter().enumerate() {
        for (pi, pair) in ray.windows(2).enumerate() {
            let step = model.site_distance(&pair[0].site, &pair[1].site);
            if step > s.lipschitz_c {
                failures.push(format!(
                    "ray {ri}: step {} to {} has length {}, above the bound {}",
                    s.rays[ri].points[pi],
                    s.rays[ri].points[pi + 1],
                    step,
                    s.lipschitz_c
                ));
            }
            if worst.as_ref().map_or(true, |w| &step > w) {
                worst = Some(step);
            }
        }
    }
    if let Some(w) = worst {
        if w <= s.lipschitz_c {
            checks.push(format!("worst listed step {} is within the bound {}", w, s.lipschitz_c));
        }
    }

    // Continuations: present, anchored at the end, valid, avoiding every
    // original, pairwise disjoint.
    let mut tails: Vec<(Site, ContinuationRule)> = Vec::new();
    for (ri, ray) in s.rays.iter().enumerate() {
        let Some(cont) = &ray.continuation else {
            failures.push(format!(
                "ray {ri} has no continuation rule and so is not an infinite ray"
            ));
            continue;
        };
        let Some(last) = parsed_rays[ri].last() else { continue };
        if cont.anchor != last.base_label {
            failures.push(format!(
                "ray {ri}: continuation anchored at `{}` but the ray ends at `{}`",
                cont.anchor, last.base_label
            ));
            continue;
        }
        let anchor_site = last.site.clone();
        if let Err(why) = model.validate_tail(&anchor_site, &cont.rule, &s.lipschitz_c, None) {
            failures.push(format!("ray {ri}: continuation rejected: {why}"));
            continue;
        }
        tails.push((anchor_site, cont.rule.clone()));
    }
    for (ti, (anchor, rule)) in tails.iter().enumerate() {
        for site in &originals {
            if tail_contains(anchor, rule, site) {
                failures.push(format!(
                    "tail {ti} passes through the listed point `{}`",
                    model.label_of(site)
                ));
            }
        }
    }
    for i in 0..tails.len() {
        for j in (i + 1)..tails.len() {
            let a = (&tails[i].0, &tails[i].1);
            let b = (&tails[j].0, &tails[j].1);
            if !model.tails_disjoint(a, b) {
                failures.push(format!(
                    "tails from `{}` and `{}` overlap",
                    model.label_of(&tails[i].0),
                    model.label_of(&tails[j].0),
                ));
            }
        }
    }
    if tails.len() == s.rays.len() {
        checks.push(format!("{} continuation tails are valid and pairwise disjoint", tails.len()));
    }

    // Multiplicity bound.
    let mult = visit_counts.values().copied().max().unwrap_or(0);
    if mult > s.multiplicity_bound {
        failures.push(format!(
            "a point is visited {mult} times, above the declared bound {}",
            s.multiplicity_bound
        ));
    } else {
        checks.push(format!(
            "no point is visited more than {} times (bound {})",
            mult, s.multiplicity_bound
        ));
    }

    // Full-model coverage claim.
    if s.covers_model {
        if coverage_certified(model, &originals, &tails) {
            checks.push("originals and tails cover the whole model".into());
        } else {
            failures.push("the structure claims full coverage but it cannot be certified".into());
        }
    }

    Ok(ValidationReport { ok: failures.is_empty(), checks, failures })
}

/// A finite tree of model points, to merge into an existing structure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabeledTree {
    pub labels: Vec<String>,
    pub edges: Vec<(usize, usize)>,
}

/// Splice a finite tree of model points into the nearest ray as a double
/// walk: the ray detours through the tree and returns to a clone of the
/// carrier point. The step bound grows to accommodate the jump and the tree
/// edges; everything else is preserved.
pub fn attach_finite(
    model: &PointModel,
    s: &RayStructure,
    tree: &LabeledTree,
) -> Result<RayStructure> {
    if tree.labels.is_empty() {
        return Ok(s.clone());
    }
    let n = tree.labels.len();
    let mut sites = Vec::with_capacity(n);
    for l in &tree.labels {
        sites.push(model.resolve(l)?);
    }
    {
        let distinct: BTreeSet<_> = sites.iter().collect();
        if distinct.len() != n {
            return Err(Error::InvalidInput("tree lists a point twice".into()));
        }
    }
    if tree.edges.len() + 1 != n {
        return Err(Error::InvalidInput("a tree on n points has n - 1 edges".into()));
    }
    let mut ds = DisjointSet::new(n);
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in &tree.edges {
        if u >= n || v >= n || u == v {
            return Err(Error::InvalidInput(format!("bad edge ({u}, {v})")));
        }
        if !ds.union(u, v) {
            return Err(Error::InvalidInput("edges contain a cycle".into()));
        }
        adj[u].push(v);
        adj[v].push(u);
    }
    for a in &mut adj {
        a.sort();
    }
    if s.rays.is_empty() {
        return Err(Error::SynthesisRefused("no carrier ray to attach to".into()));
    }
    // The structure's originals, and a conflict check.
    let mut originals: BTreeSet<String> = BTreeSet::new();
    for ray in &s.rays {
        for label in &ray.points {
            let (base, is_clone) = split_label(label);
            if !is_clone {
                originals.insert(base.to_string());
            }
        }
    }
    for l in &tree.labels {
        if originals.contains(l) {
            return Err(Error::SynthesisRefused(format!(
                "`{l}` is already listed in the structure"
            )));
        }
    }
    for ray in &s.rays {
        if let (Some(cont), Some(last)) = (&ray.continuation, ray.points.last()) {
            let (base, _) = split_label(last);
            let anchor = model.resolve(base)?;
            if cont.anchor == base {
                for site in &sites {
                    if tail_contains(&anchor, &cont.rule, site) {
                        return Err(Error::SynthesisRefused(format!(
                            "`{}` already lies on a continuation tail",
                            model.label_of(site)
                        )));
                    }
                }
            }
        }
    }
    // Nearest carrier original.
    let mut best: Option<(Dist, usize, usize, usize)> = None;
    for (ri, ray) in s.rays.iter().enumerate() {
        for (pi, label) in ray.points.iter().enumerate() {
            let (base, is_clone) = split_label(label);
            if is_clone {
                continue;
            }
            let carrier = model.resolve(base)?;
            for (qi, q) in sites.iter().enumerate() {
                let d = model.site_distance(&carrier, q);
                let key = (d, ri, pi, qi);
                if best.as_ref().map_or(true, |b| key < *b) {
                    best = Some(key);
                }
            }
        }
    }
    let (jump, ri, pi, root) = best.expect("rays and tree are nonempty");
    // Double walk of the tree, with fresh clone labels.
    let mut parent = vec![usize::MAX; n];
    let mut order = Vec::new();
    let mut seen = vec![false; n];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                parent[w] = v;
                queue.push_back(w);
            }
        }
    }
    if order.len() != n {
        return Err(Error::InvalidInput("tree is not connected".into()));
    }
    let mut kids = vec![Vec::new(); n];
    for &v in &order {
        if parent[v] != usize::MAX {
            kids[parent[v]].push(v);
        }
    }
    let mut tour = Vec::new();
    euler_tour(&kids, root, &mut tour);
    let mut clone_counters: BTreeMap<usize, usize> = BTreeMap::new();
    let tour_labels: Vec<String> = tour
        .iter()
        .map(|v| match v {
            RayVisit::Original(i) => tree.labels[*i].clone(),
            RayVisit::Clone(i) => {
                let c = clone_counters.entry(*i).or_insert(0);
                *c += 1;
                format!("{}~{c}", tree.labels[*i])
            }
        })
        .collect();
    // Fresh clone label for the carrier.
    let carrier_label = {
        let (base, _) = split_label(&s.rays[ri].points[pi]);
        base.to_string()
    };
    let existing_clones = s.rays[ri]
        .points
        .iter()
        .filter(|l| {
            let (b, c) = split_label(l);
            c && b == carrier_label
        })
        .count();
    let carrier_clone = format!("{carrier_label}~{}", existing_clones + 1);

    let mut new_rays = s.rays.clone();
    let ray_points = &mut new_rays[ri].points;
    let mut rebuilt = Vec::with_capacity(ray_points.len() + tour_labels.len() + 1);
    rebuilt.extend_from_slice(&ray_points[..=pi]);
    rebuilt.extend(tour_labels);
    rebuilt.push(carrier_clone);
    rebuilt.extend_from_slice(&ray_points[pi + 1..]);
    *ray_points = rebuilt;

    // New step bound: the jump in and out, and the tree edges.
    let mut c = s.lipschitz_c.clone();
    if jump > c {
        c = jump;
    }
    for &(u, v) in &tree.edges {
        let d = model.site_distance(&sites[u], &sites[v]);
        if d > c {
            c = d;
        }
    }
    // Recompute multiplicity and coverage on the merged structure.
    let mut visit_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut merged_originals: BTreeSet<Site> = BTreeSet::new();
    for ray in &new_rays {
        for label in &ray.points {
            let (base, is_clone) = split_label(label);
            *visit_counts.entry(base.to_string()).or_insert(0) += 1;
            if !is_clone {
                merged_originals.insert(model.resolve(base)?);
            }
        }
    }
    let mut tails = Vec::new();
    for ray in &new_rays {
        if let (Some(cont), Some(last)) = (&ray.continuation, ray.points.last()) {
            let (base, _) = split_label(last);
            tails.push((model.resolve(base)?, cont.rule.clone()));
        }
    }
    Ok(RayStructure {
        alpha: s.alpha.clone(),
        lipschitz_c: c,
        multiplicity_bound: visit_counts.values().copied().max().unwrap_or(0),
        covers_model: coverage_certified(model, &merged_originals, &tails),
        window: s.window.clone(),
        rays: new_rays,
    })
}

#[cfg(test)]
mod tests;
