//! Exact power-counting checker for labelled directed multigraphs.
//!
//! A diagram carries a star vertex `⋆` with `q ≥ 1` test edges to distinct
//! distinguished vertices, and edges labelled `(a_e, r_e)` with `a_e` a
//! nonnegative rational singularity degree and `r_e ∈ {−1, 0, 1}` a
//! renormalization flag. The checker verifies, in exact rational arithmetic,
//! the subset inequalities guaranteeing a bound `λ^α̃` for the associated
//! singular integral:
//!
//! * full criterion (four items), with
//!   `α̃ = |𝔰|·|𝕍∖𝕍_⋆| − Σ_e a_e`;
//! * weak variant (items 1–2 only), with
//!   `α̃ = |𝔰|·|𝕍∖𝕍_⋆| − Σ_e a_e − R(𝔾)` where
//!   `R(𝔾) = max_{𝕍̄ ⊆ 𝕍∖𝕍_⋆} (|𝕍̄||𝔰| − Σ_{e incident} a_e) ∨ 0`.
//!
//! Item 1 follows the multi-edge convention: parallel edges between the same
//! vertex pair have their labels added before testing
//! `Σa_e − Σr⁻_e < |𝔰|` (with `r⁻_e = 1` for `r_e = −1`, else 0).
//! Subset items are checked exhaustively by bitmask enumeration (≤ 24
//! vertices). Failures carry replayable witnesses: the subset and both sides
//! of the violated inequality.

use crate::error::{Error, Result};
use num::{BigRational, One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

/// Largest vertex count for which subset enumeration is attempted.
pub const MAX_ENUMERATION_VERTICES: usize = 24;

/// Role tag of an edge, used for reporting and format round-trips; the
/// checker itself only reads the labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// Test-function edge at the star vertex, label `(0, 0)`.
    Test,
    /// Singular kernel edge.
    Kernel,
    /// Mollifier autocorrelation edge.
    Rho,
    /// Fictitious edge representing the constant 1, inserted so sparse
    /// vertices satisfy the connectivity item.
    Fictitious,
    /// Bounded-function edge, label `(0, 0)`, kept so encoded diagrams match
    /// their source constructions.
    F,
}

impl EdgeKind {
    fn tag(self) -> &'static str {
        match self {
            EdgeKind::Test => "test",
            EdgeKind::Kernel => "kernel",
            EdgeKind::Rho => "rho",
            EdgeKind::Fictitious => "fict",
            EdgeKind::F => "f",
        }
    }

    fn from_tag(s: &str) -> Option<Self> {
        match s {
            "test" => Some(EdgeKind::Test),
            "kernel" => Some(EdgeKind::Kernel),
            "rho" => Some(EdgeKind::Rho),
            "fict" | "fictitious" => Some(EdgeKind::Fictitious),
            "f" | "F" => Some(EdgeKind::F),
            _ => None,
        }
    }
}

/// One directed labelled edge.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagramEdge {
    /// Source vertex `e₋`.
    pub from: usize,
    /// Target vertex `e₊`.
    pub to: usize,
    /// Role tag.
    pub kind: EdgeKind,
    /// Singularity degree `a_e ≥ 0`.
    pub weight: BigRational,
    /// Renormalization flag `r_e ∈ {−1, 0, 1}`.
    pub renorm: i8,
    /// Centering constant recorded for `r_e = −1` edges (bookkeeping only).
    pub centering: Option<BigRational>,
}

impl DiagramEdge {
    /// Magnitude of the negative part of `r_e`.
    fn r_minus(&self) -> i8 {
        if self.renorm < 0 {
            -self.renorm
        } else {
            0
        }
    }
}

/// A labelled directed multigraph with star structure.
#[derive(Debug, Clone)]
pub struct LabelledDiagram {
    scaling: u32,
    names: Vec<String>,
    star: usize,
    test_targets: Vec<usize>,
    edges: Vec<DiagramEdge>,
}

impl LabelledDiagram {
    /// Validate and build a diagram. `names` assigns display names to vertex
    /// ids `0..names.len()`.
    pub fn new(
        scaling: u32,
        names: Vec<String>,
        star: usize,
        edges: Vec<DiagramEdge>,
    ) -> Result<Self> {
        if scaling != 2 && scaling != 4 {
            return Err(Error::InvalidDiagram(format!(
                "scaling dimension must be 2 or 4, got {scaling}"
            )));
        }
        let n = names.len();
        if star >= n {
            return Err(Error::InvalidDiagram(format!(
                "star vertex id {star} out of range (have {n} vertices)"
            )));
        }
        let mut test_targets = Vec::new();
        for e in &edges {
            if e.from >= n || e.to >= n {
                return Err(Error::InvalidDiagram(format!(
                    "edge endpoint out of range: {} -> {}",
                    e.from, e.to
                )));
            }
            if e.from == e.to {
                return Err(Error::InvalidDiagram(format!(
                    "self-loop at vertex `{}`",
                    names[e.from]
                )));
            }
            if !matches!(e.renorm, -1..=1) {
                return Err(Error::InvalidDiagram(format!(
                    "renormalization flag must be in {{−1, 0, 1}}, got {}",
                    e.renorm
                )));
            }
            if e.weight.is_negative() {
                return Err(Error::InvalidDiagram(format!(
                    "negative singularity degree {} on `{}` -> `{}`",
                    e.weight, names[e.from], names[e.to]
                )));
            }
            if (e.from == star || e.to == star) && e.renorm != 0 {
                return Err(Error::InvalidDiagram(format!(
                    "edge touching the star vertex must have r = 0 (`{}` -> `{}`)",
                    names[e.from], names[e.to]
                )));
            }
            if e.kind == EdgeKind::Test {
                if e.from != star && e.to != star {
                    return Err(Error::InvalidDiagram(
                        "test edge must touch the star vertex".into(),
                    ));
                }
                if !e.weight.is_zero() {
                    return Err(Error::InvalidDiagram(
                        "test edges carry label (0, 0)".into(),
                    ));
                }
                let target = if e.from == star { e.to } else { e.from };
                if test_targets.contains(&target) {
                    return Err(Error::InvalidDiagram(format!(
                        "duplicate test edge to `{}`",
                        names[target]
                    )));
                }
                test_targets.push(target);
            }
        }
        if test_targets.is_empty() {
            return Err(Error::InvalidDiagram(
                "diagram needs at least one test edge".into(),
            ));
        }
        // Among parallel edges, at most one renormalized, and positively so.
        let mut by_pair: BTreeMap<(usize, usize), Vec<&DiagramEdge>> = BTreeMap::new();
        for e in &edges {
            let key = (e.from.min(e.to), e.from.max(e.to));
            by_pair.entry(key).or_default().push(e);
        }
        for ((u, v), group) in &by_pair {
            if group.len() > 1 {
                let renormalized: Vec<i8> =
                    group.iter().map(|e| e.renorm).filter(|&r| r != 0).collect();
                if renormalized.len() > 1 || renormalized.iter().any(|&r| r < 0) {
                    return Err(Error::InvalidDiagram(format!(
                        "parallel edges between `{}` and `{}` may carry at most one \
                         renormalization flag, and it must be positive",
                        names[*u], names[*v]
                    )));
                }
            }
        }
        test_targets.sort_unstable();
        Ok(Self {
            scaling,
            names,
            star,
            test_targets,
            edges,
        })
    }

    /// Scaling dimension `|𝔰|`.
    pub fn scaling(&self) -> u32 {
        self.scaling
    }

    /// Number of vertices.
    pub fn num_vertices(&self) -> usize {
        self.names.len()
    }

    /// Display name of a vertex id.
    pub fn vertex_name(&self, v: usize) -> &str {
        &self.names[v]
    }

    /// Star vertex id.
    pub fn star(&self) -> usize {
        self.star
    }

    /// Distinguished test-edge targets, sorted.
    pub fn test_targets(&self) -> &[usize] {
        &self.test_targets
    }

    /// All edges.
    pub fn edges(&self) -> &[DiagramEdge] {
        &self.edges
    }

    /// Vertices outside the distinguished set `𝕍_⋆ = {⋆} ∪ targets`.
    pub fn integration_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices())
            .filter(|&v| v != self.star && !self.test_targets.contains(&v))
            .collect()
    }

    /// Sum of all singularity degrees.
    pub fn total_weight(&self) -> BigRational {
        self.edges.iter().map(|e| e.weight.clone()).sum()
    }

    /// Serialize to the line-oriented text format (parseable back).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let tests: Vec<&str> = self
            .test_targets
            .iter()
            .map(|&v| self.names[v].as_str())
            .collect();
        let _ = writeln!(
            out,
            "graph |s|={} star={} tests={}",
            self.scaling,
            self.names[self.star],
            tests.join(",")
        );
        for e in &self.edges {
            let _ = write!(
                out,
                "{} {} {} {} {}",
                self.names[e.from],
                self.names[e.to],
                e.kind.tag(),
                e.weight,
                e.renorm
            );
            if let Some(i) = &e.centering {
                let _ = write!(out, " {i}");
            }
            out.push('\n');
        }
        out
    }
}

/// Parse the line-oriented diagram format.
///
/// Header: `graph |s|=<2|4> star=<name> tests=<name,name,…>`. Then one edge
/// per line: `<from> <to> <kind> <a> <r> [I]` with `<a>`, `[I]` rationals
/// (`num/den` or integer) and `<r> ∈ {−1, 0, 1}`. `#` starts a comment;
/// blank lines are skipped. Vertices are declared by use.
pub fn parse_diagram(text: &str) -> Result<LabelledDiagram> {
    let mut scaling = None;
    let mut star_name = None;
    let mut test_names: Vec<String> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut edges = Vec::new();
    let mut saw_header = false;

    let intern = |name: &str, names: &mut Vec<String>, ids: &mut BTreeMap<String, usize>| {
        *ids.entry(name.to_string()).or_insert_with(|| {
            names.push(name.to_string());
            names.len() - 1
        })
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if !saw_header {
            if toks[0] != "graph" {
                return Err(Error::ParseError {
                    line: lineno,
                    detail: "expected header starting with `graph`".into(),
                });
            }
            for tok in &toks[1..] {
                if let Some(v) = tok.strip_prefix("|s|=") {
                    scaling = Some(v.parse::<u32>().map_err(|_| Error::ParseError {
                        line: lineno,
                        detail: format!("bad scaling `{v}`"),
                    })?);
                } else if let Some(v) = tok.strip_prefix("star=") {
                    star_name = Some(v.to_string());
                } else if let Some(v) = tok.strip_prefix("tests=") {
                    test_names = v.split(',').map(str::to_string).collect();
                } else {
                    return Err(Error::ParseError {
                        line: lineno,
                        detail: format!("unknown header field `{tok}`"),
                    });
                }
            }
            let (Some(_), Some(_)) = (&scaling, &star_name) else {
                return Err(Error::ParseError {
                    line: lineno,
                    detail: "header must set |s|= and star=".into(),
                });
            };
            if test_names.is_empty() {
                return Err(Error::ParseError {
                    line: lineno,
                    detail: "header must list tests=".into(),
                });
            }
            saw_header = true;
            continue;
        }
        if toks.len() < 5 || toks.len() > 6 {
            return Err(Error::ParseError {
                line: lineno,
                detail: format!(
                    "edge line needs `from to kind a r [I]`, got {} fields",
                    toks.len()
                ),
            });
        }
        let from = intern(toks[0], &mut names, &mut ids);
        let to = intern(toks[1], &mut names, &mut ids);
        let kind = EdgeKind::from_tag(toks[2]).ok_or_else(|| Error::ParseError {
            line: lineno,
            detail: format!("unknown edge kind `{}`", toks[2]),
        })?;
        let weight = BigRational::from_str(toks[3]).map_err(|_| Error::ParseError {
            line: lineno,
            detail: format!("bad rational `{}`", toks[3]),
        })?;
        let renorm: i8 = toks[4].parse().map_err(|_| Error::ParseError {
            line: lineno,
            detail: format!("bad renormalization flag `{}`", toks[4]),
        })?;
        let centering = match toks.get(5) {
            Some(t) => Some(BigRational::from_str(t).map_err(|_| Error::ParseError {
                line: lineno,
                detail: format!("bad rational `{t}`"),
            })?),
            None => None,
        };
        edges.push(DiagramEdge {
            from,
            to,
            kind,
            weight,
            renorm,
            centering,
        });
    }
    if !saw_header {
        return Err(Error::ParseError {
            line: 1,
            detail: "missing header".into(),
        });
    }
    let star_name = star_name.unwrap();
    let star = *ids.get(&star_name).ok_or_else(|| Error::UnknownVertex(star_name.clone()))?;
    for t in &test_names {
        if !ids.contains_key(t) {
            return Err(Error::UnknownVertex(t.clone()));
        }
    }
    let diagram = LabelledDiagram::new(scaling.unwrap(), names, star, edges)?;
    // The header's test list must match the test edges found.
    let declared: Vec<usize> = {
        let mut v: Vec<usize> = test_names.iter().map(|t| ids[t]).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    if declared != diagram.test_targets {
        return Err(Error::InvalidDiagram(
            "header tests= does not match the test edges present".into(),
        ));
    }
    Ok(diagram)
}

/// The four boundary/interior edge sets of a vertex subset, as edge indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSets {
    /// `e₋ ∈ 𝕍̄`, `e₊ ∉ 𝕍̄`, `r_e > 0`.
    pub outgoing: Vec<usize>,
    /// `e₊ ∈ 𝕍̄`, `e₋ ∉ 𝕍̄`, `r_e > 0`.
    pub incoming: Vec<usize>,
    /// Both endpoints in `𝕍̄`.
    pub internal: Vec<usize>,
    /// At least one endpoint in `𝕍̄`.
    pub incident: Vec<usize>,
}

/// Classify every edge relative to the subset (with multiplicity).
pub fn edge_sets(diagram: &LabelledDiagram, subset: &[usize]) -> Result<EdgeSets> {
    let n = diagram.num_vertices();
    let mut mask = vec![false; n];
    for &v in subset {
        if v >= n {
            return Err(Error::UnknownVertex(format!("vertex id {v}")));
        }
        mask[v] = true;
    }
    let mut sets = EdgeSets {
        outgoing: Vec::new(),
        incoming: Vec::new(),
        internal: Vec::new(),
        incident: Vec::new(),
    };
    for (i, e) in diagram.edges.iter().enumerate() {
        let fin = mask[e.from];
        let tin = mask[e.to];
        if fin || tin {
            sets.incident.push(i);
        }
        if fin && tin {
            sets.internal.push(i);
        } else if fin && e.renorm > 0 {
            sets.outgoing.push(i);
        } else if tin && e.renorm > 0 {
            sets.incoming.push(i);
        }
    }
    Ok(sets)
}

/// Which criterion a report was produced by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssumptionKind {
    /// Four-item criterion.
    Full,
    /// Two-item weak variant.
    Weak,
}

/// One violated inequality, replayable via [`replay_item`].
#[derive(Debug, Clone)]
pub struct Violation {
    /// Witness vertex subset (for item 1: the merged parallel pair).
    pub subset: Vec<usize>,
    /// Left-hand side as evaluated.
    pub lhs: BigRational,
    /// Right-hand side as evaluated.
    pub rhs: BigRational,
    /// Human-readable restatement with vertex names.
    pub description: String,
}

/// Verdict of one item of an assumption.
#[derive(Debug, Clone)]
pub struct ItemVerdict {
    /// Item number (1-based).
    pub item: usize,
    /// Whether every instance of the inequality held.
    pub passed: bool,
    /// Retained witnesses (capped; `total_violations` counts all).
    pub violations: Vec<Violation>,
    /// Total number of violating instances found.
    pub total_violations: usize,
}

/// Full result of checking a diagram against an assumption.
#[derive(Debug, Clone)]
pub struct CheckReport {
    /// Which criterion was checked.
    pub assumption: AssumptionKind,
    /// Scaling dimension used.
    pub scaling: u32,
    /// Per-item verdicts in order.
    pub items: Vec<ItemVerdict>,
    /// The exponent `α̃` (full form, or weak form including the defect).
    pub alpha: BigRational,
    /// For the weak variant: `R(𝔾)` and its maximizing subset.
    pub defect: Option<(BigRational, Vec<usize>)>,
    /// Conjunction of all item verdicts.
    pub passed: bool,
}

impl CheckReport {
    /// JSON form with rationals rendered as `num/den` strings.
    pub fn to_json(&self, diagram: &LabelledDiagram) -> serde_json::Value {
        let name = |subset: &[usize]| -> Vec<String> {
            subset
                .iter()
                .map(|&v| diagram.vertex_name(v).to_string())
                .collect()
        };
        serde_json::json!({
            "assumption": match self.assumption {
                AssumptionKind::Full => "full",
                AssumptionKind::Weak => "weak",
            },
            "scaling": self.scaling,
            "alpha": self.alpha.to_string(),
            "defect": self.defect.as_ref().map(|(r, w)| serde_json::json!({
                "value": r.to_string(),
                "witness": name(w),
            })),
            "passed": self.passed,
            "items": self.items.iter().map(|it| serde_json::json!({
                "item": it.item,
                "passed": it.passed,
                "total_violations": it.total_violations,
                "violations": it.violations.iter().map(|v| serde_json::json!({
                    "subset": name(&v.subset),
                    "lhs": v.lhs.to_string(),
                    "rhs": v.rhs.to_string(),
                    "description": v.description,
                })).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })
    }
}

const WITNESS_CAP: usize = 16;

fn rational(n: i64) -> BigRational {
    BigRational::from_integer(n.into())
}

fn guard_size(diagram: &LabelledDiagram) -> Result<()> {
    let n = diagram.num_vertices();
    if n > MAX_ENUMERATION_VERTICES {
        return Err(Error::TooLarge {
            vertices: n,
            limit: MAX_ENUMERATION_VERTICES,
        });
    }
    Ok(())
}

/// `α̃` for the full criterion: `|𝔰|·|𝕍∖𝕍_⋆| − Σ_e a_e`.
pub fn compute_alpha_full(diagram: &LabelledDiagram) -> BigRational {
    let free = diagram.integration_vertices().len();
    rational(diagram.scaling as i64 * free as i64) - diagram.total_weight()
}

/// The defect `R(𝔾) = max_{𝕍̄ ⊆ 𝕍∖𝕍_⋆}(|𝕍̄||𝔰| − Σ_{e ∈ 𝔼(𝕍̄)} a_e) ∨ 0`
/// with a maximizing witness (empty when the maximum is attained at 0).
pub fn compute_r(diagram: &LabelledDiagram) -> Result<(BigRational, Vec<usize>)> {
    guard_size(diagram)?;
    let free = diagram.integration_vertices();
    let mut best = BigRational::zero();
    let mut witness: Vec<usize> = Vec::new();
    for mask in 1u32..(1u32 << free.len()) {
        let subset: Vec<usize> = free
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &v)| v)
            .collect();
        let sets = edge_sets(diagram, &subset)?;
        let incident: BigRational = sets
            .incident
            .iter()
            .map(|&i| diagram.edges[i].weight.clone())
            .sum();
        let value = rational(diagram.scaling as i64 * subset.len() as i64) - incident;
        if value > best {
            best = value;
            witness = subset;
        }
    }
    Ok((best, witness))
}

/// `α̃` for the weak variant: the full exponent lowered by the defect.
pub fn compute_alpha_weak(diagram: &LabelledDiagram) -> Result<BigRational> {
    Ok(compute_alpha_full(diagram) - compute_r(diagram)?.0)
}

/// Evaluate one item's inequality on one witness subset, returning
/// `(lhs, rhs, holds)`. Item numbering matches the check reports; for item 1
/// the subset must be the two endpoints of a (merged) parallel edge group.
pub fn replay_item(
    diagram: &LabelledDiagram,
    item: usize,
    subset: &[usize],
) -> Result<(BigRational, BigRational, bool)> {
    let s = rational(diagram.scaling as i64);
    match item {
        1 => {
            if subset.len() != 2 {
                return Err(Error::InvalidDiagram(
                    "item 1 witnesses are vertex pairs".into(),
                ));
            }
            let (u, v) = (subset[0].min(subset[1]), subset[0].max(subset[1]));
            let mut lhs = BigRational::zero();
            for e in &diagram.edges {
                if e.from.min(e.to) == u && e.from.max(e.to) == v {
                    lhs += e.weight.clone() - rational(e.r_minus() as i64);
                }
            }
            let holds = lhs < s;
            Ok((lhs, s, holds))
        }
        2 => {
            let sets = edge_sets(diagram, subset)?;
            let lhs: BigRational = sets
                .internal
                .iter()
                .map(|&i| diagram.edges[i].weight.clone())
                .sum();
            let rhs = rational(subset.len() as i64 - 1) * s;
            Ok((lhs.clone(), rhs.clone(), lhs < rhs))
        }
        3 => {
            let sets = edge_sets(diagram, subset)?;
            let mut lhs: BigRational = sets
                .internal
                .iter()
                .map(|&i| diagram.edges[i].weight.clone())
                .sum();
            for &i in &sets.outgoing {
                let e = &diagram.edges[i];
                lhs += e.weight.clone() + rational(e.renorm as i64) - BigRational::one();
            }
            for &i in &sets.incoming {
                lhs -= rational(diagram.edges[i].renorm as i64);
            }
            let rhs = rational(subset.len() as i64 - 1) * s;
            Ok((lhs.clone(), rhs.clone(), lhs < rhs))
        }
        4 => {
            let sets = edge_sets(diagram, subset)?;
            let mut lhs = BigRational::zero();
            for &i in &sets.incident {
                if !sets.incoming.contains(&i) {
                    lhs += diagram.edges[i].weight.clone();
                }
            }
            for &i in &sets.outgoing {
                lhs += rational(diagram.edges[i].renorm as i64);
            }
            for &i in &sets.incoming {
                lhs -= rational(diagram.edges[i].renorm as i64) - BigRational::one();
            }
            let rhs = rational(subset.len() as i64) * s;
            Ok((lhs.clone(), rhs.clone(), lhs > rhs))
        }
        _ => Err(Error::InvalidDiagram(format!("no item {item}"))),
    }
}

fn check_item_1(diagram: &LabelledDiagram) -> ItemVerdict {
    let mut groups: BTreeMap<(usize, usize), ()> = BTreeMap::new();
    for e in &diagram.edges {
        groups.insert((e.from.min(e.to), e.from.max(e.to)), ());
    }
    let mut verdict = ItemVerdict {
        item: 1,
        passed: true,
        violations: Vec::new(),
        total_violations: 0,
    };
    for &(u, v) in groups.keys() {
        let (lhs, rhs, holds) = replay_item(diagram, 1, &[u, v]).expect("valid pair");
        if !holds {
            verdict.passed = false;
            verdict.total_violations += 1;
            if verdict.violations.len() < WITNESS_CAP {
                verdict.violations.push(Violation {
                    subset: vec![u, v],
                    lhs: lhs.clone(),
                    rhs: rhs.clone(),
                    description: format!(
                        "merged labels between `{}` and `{}`: Σa − Σr⁻ = {lhs} ≥ |s| = {rhs}",
                        diagram.vertex_name(u),
                        diagram.vertex_name(v)
                    ),
                });
            }
        }
    }
    verdict
}

/// Run `item` over every qualifying subset drawn from `pool` (with the given
/// minimum size, optionally forcing the star vertex into each subset).
fn check_subset_item(
    diagram: &LabelledDiagram,
    item: usize,
    pool: &[usize],
    min_size: usize,
    include_star: bool,
) -> ItemVerdict {
    let mut verdict = ItemVerdict {
        item,
        passed: true,
        violations: Vec::new(),
        total_violations: 0,
    };
    for mask in 0u32..(1u32 << pool.len()) {
        let mut subset: Vec<usize> = pool
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &v)| v)
            .collect();
        if include_star {
            subset.push(diagram.star());
        }
        if subset.len() < min_size || subset.is_empty() {
            continue;
        }
        subset.sort_unstable();
        let (lhs, rhs, holds) = replay_item(diagram, item, &subset).expect("valid subset");
        if !holds {
            verdict.passed = false;
            verdict.total_violations += 1;
            if verdict.violations.len() < WITNESS_CAP {
                let names: Vec<&str> =
                    subset.iter().map(|&v| diagram.vertex_name(v)).collect();
                let rel = if item == 4 { "≤" } else { "≥" };
                verdict.violations.push(Violation {
                    subset: subset.clone(),
                    lhs: lhs.clone(),
                    rhs: rhs.clone(),
                    description: format!(
                        "item {item} on {{{}}}: {lhs} {rel} {rhs}",
                        names.join(", ")
                    ),
                });
            }
        }
    }
    verdict
}

/// Check the four-item criterion; see the module documentation.
pub fn check_assumption_full(diagram: &LabelledDiagram) -> Result<CheckReport> {
    guard_size(diagram)?;
    // Pools: item 2 over 𝕍∖{⋆} (size ≥ 3), item 3 over subsets containing ⋆
    // (size ≥ 2), item 4 over 𝕍∖𝕍_⋆ (nonempty).
    let non_star: Vec<usize> = (0..diagram.num_vertices())
        .filter(|&v| v != diagram.star())
        .collect();
    let free = diagram.integration_vertices();
    let items = vec![
        check_item_1(diagram),
        check_subset_item(diagram, 2, &non_star, 3, false),
        check_subset_item(diagram, 3, &non_star, 2, true),
        check_subset_item(diagram, 4, &free, 1, false),
    ];
    let passed = items.iter().all(|i| i.passed);
    Ok(CheckReport {
        assumption: AssumptionKind::Full,
        scaling: diagram.scaling(),
        items,
        alpha: compute_alpha_full(diagram),
        defect: None,
        passed,
    })
}

/// Check the two-item weak variant; the report's `alpha` includes the defect.
pub fn check_assumption_weak(diagram: &LabelledDiagram) -> Result<CheckReport> {
    guard_size(diagram)?;
    let non_star: Vec<usize> = (0..diagram.num_vertices())
        .filter(|&v| v != diagram.star())
        .collect();
    let items = vec![
        check_item_1(diagram),
        check_subset_item(diagram, 2, &non_star, 3, false),
    ];
    let passed = items.iter().all(|i| i.passed);
    let defect = compute_r(diagram)?;
    let alpha = compute_alpha_full(diagram) - defect.0.clone();
    Ok(CheckReport {
        assumption: AssumptionKind::Weak,
        scaling: diagram.scaling(),
        items,
        alpha,
        defect: Some(defect),
        passed,
    })
}

/// Parametric encodings of the reference diagrams used by the test and
/// acceptance suites.
pub mod fixtures {
    use super::*;

    fn edge(
        from: usize,
        to: usize,
        kind: EdgeKind,
        weight: BigRational,
        renorm: i8,
    ) -> DiagramEdge {
        let centering = if renorm < 0 {
            Some(BigRational::one())
        } else {
            None
        };
        DiagramEdge {
            from,
            to,
            kind,
            weight,
            renorm,
            centering,
        }
    }

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    /// How the two non-test vertex columns of a two-column diagram are tied
    /// together by the autocorrelation / fictitious edges.
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum TwoColumnWiring {
        /// Autocorrelation across the tops and across the bottoms.
        PairedRows,
        /// Autocorrelation across the two diagonals.
        Crossed,
        /// Autocorrelation across the tops, fictitious edge across bottoms.
        TopRhoBottomFictitious,
        /// Autocorrelation across the bottoms, fictitious edge across tops.
        BottomRhoTopFictitious,
        /// Autocorrelation on one diagonal, fictitious on the other.
        DiagonalRhoFictitious,
        /// No autocorrelation; a fictitious edge parallel to each kernel edge.
        ParallelFictitious,
        /// No autocorrelation and no fictitious edges (fails connectivity).
        Bare,
    }

    /// Two-column diagram (`q = 2`): star, two bottom vertices carrying test
    /// edges, two top vertices with renormalized kernel edges `(κ′, 1)` to
    /// their bottoms; autocorrelation edges `(2+κ, −1)` and fictitious edges
    /// `(1+κ″, 0)` wired per `wiring`. Spatial scaling `|𝔰| = 2`.
    pub fn two_column(
        wiring: TwoColumnWiring,
        kappa: &BigRational,
        kappa_p: &BigRational,
        kappa_pp: &BigRational,
    ) -> LabelledDiagram {
        let v = names(&["star", "b1", "b2", "t1", "t2"]);
        let (star, b1, b2, t1, t2) = (0, 1, 2, 3, 4);
        let two = rational(2);
        let one = rational(1);
        let mut edges = vec![
            edge(star, b1, EdgeKind::Test, BigRational::zero(), 0),
            edge(star, b2, EdgeKind::Test, BigRational::zero(), 0),
            edge(t1, b1, EdgeKind::Kernel, kappa_p.clone(), 1),
            edge(t2, b2, EdgeKind::Kernel, kappa_p.clone(), 1),
        ];
        let rho = |from, to| edge(from, to, EdgeKind::Rho, &two + kappa, -1);
        let fict = |from, to| edge(from, to, EdgeKind::Fictitious, &one + kappa_pp, 0);
        match wiring {
            TwoColumnWiring::PairedRows => {
                edges.push(rho(t2, t1));
                edges.push(rho(b2, b1));
            }
            TwoColumnWiring::Crossed => {
                edges.push(rho(t2, b1));
                edges.push(rho(b2, t1));
            }
            TwoColumnWiring::TopRhoBottomFictitious => {
                edges.push(rho(t2, t1));
                edges.push(fict(b2, b1));
            }
            TwoColumnWiring::BottomRhoTopFictitious => {
                edges.push(rho(b2, b1));
                edges.push(fict(t2, t1));
            }
            TwoColumnWiring::DiagonalRhoFictitious => {
                edges.push(rho(t2, b1));
                edges.push(fict(b2, t1));
            }
            TwoColumnWiring::ParallelFictitious => {
                edges.push(fict(t1, b1));
                edges.push(fict(t2, b2));
            }
            TwoColumnWiring::Bare => {}
        }
        LabelledDiagram::new(2, v, star, edges).expect("fixture is well formed")
    }

    /// Five-column diagram (`q = 5`), same edge families as [`two_column`].
    /// `wiring = 0`: fully autocorrelation-paired; `1`: four autocorrelation
    /// edges leaving two lone tops tied by a fictitious edge; `2`: the mixed
    /// pairing leaving two bottoms lone (no fictitious edge needed).
    pub fn five_column(
        wiring: usize,
        kappa: &BigRational,
        kappa_p: &BigRational,
        kappa_pp: &BigRational,
    ) -> LabelledDiagram {
        let v = names(&[
            "star", "b1", "b2", "b3", "b4", "b5", "t1", "t2", "t3", "t4", "t5",
        ]);
        let star = 0;
        let b = [1, 2, 3, 4, 5];
        let t = [6, 7, 8, 9, 10];
        let two = rational(2);
        let one = rational(1);
        let mut edges = Vec::new();
        for i in 0..5 {
            edges.push(edge(star, b[i], EdgeKind::Test, BigRational::zero(), 0));
            edges.push(edge(t[i], b[i], EdgeKind::Kernel, kappa_p.clone(), 1));
        }
        let rho = |from, to| edge(from, to, EdgeKind::Rho, &two + kappa, -1);
        let fict = |from, to| edge(from, to, EdgeKind::Fictitious, &one + kappa_pp, 0);
        match wiring {
            0 => {
                // t4–t3, b5–b4, b2–b3, b1–t2, t5–t1 (all autocorrelation).
                edges.push(rho(t[3], t[2]));
                edges.push(rho(b[4], b[3]));
                edges.push(rho(b[1], b[2]));
                edges.push(rho(b[0], t[1]));
                edges.push(rho(t[4], t[0]));
            }
            1 => {
                // b4–b3, b5–t4, b2–t3, b1–t2; fictitious t5–t1.
                edges.push(rho(b[3], b[2]));
                edges.push(rho(b[4], t[3]));
                edges.push(rho(b[1], t[2]));
                edges.push(rho(b[0], t[1]));
                edges.push(fict(t[4], t[0]));
            }
            2 => {
                // t4–t3, b4–b3, t1–b2, t5–t2; bottoms b1, b5 stay lone.
                edges.push(rho(t[3], t[2]));
                edges.push(rho(b[3], b[2]));
                edges.push(rho(t[0], b[1]));
                edges.push(rho(t[4], t[1]));
            }
            _ => panic!("five_column wiring ∈ {{0, 1, 2}}"),
        }
        LabelledDiagram::new(2, v, star, edges).expect("fixture is well formed")
    }

    /// A fictitious-edge label parameter compatible with every reference
    /// diagram at once.
    ///
    /// Two constraints must hold simultaneously: a fictitious edge parallel
    /// to a kernel edge merges into one group whose label sum must stay
    /// below the scaling dimension (`κ′ + κ″ < 1`), while a fictitious edge
    /// tying two top vertices must carry enough weight that the pair clears
    /// the connectivity item (`2κ′ + κ″ > 1`). The window `(1−2κ′, 1−κ′)` is
    /// nonempty exactly when `κ′ > 0`; this returns its midpoint
    /// `1 − 3κ′/2`.
    pub fn feasible_kappa_pp(kappa_p: &BigRational) -> BigRational {
        BigRational::one() - BigRational::new(3.into(), 2.into()) * kappa_p
    }

    /// Cherry diagram: `q` bottoms each carrying two unrenormalized kernel
    /// edges `(1+κ′, 0)` from their two tops; `pairs` autocorrelation edges
    /// `(2+κ, −1)` tie tops together, leaving `2q − 2·pairs` lone tops.
    /// Checked against the weak variant. Spatial scaling.
    pub fn cherry(q: usize, pairs: usize, kappa: &BigRational, kappa_p: &BigRational) -> LabelledDiagram {
        assert!(q >= 1 && 2 * pairs <= 2 * q);
        let mut v = vec!["star".to_string()];
        for i in 1..=q {
            v.push(format!("b{i}"));
        }
        for i in 1..=q {
            v.push(format!("t{i}a"));
            v.push(format!("t{i}b"));
        }
        let star = 0;
        let bottom = |i: usize| i; // 1-based bottoms at ids 1..=q
        let top = |i: usize, side: usize| q + 2 * (i - 1) + side + 1;
        let one = rational(1);
        let two = rational(2);
        let mut edges = Vec::new();
        for i in 1..=q {
            edges.push(edge(star, bottom(i), EdgeKind::Test, BigRational::zero(), 0));
            edges.push(edge(top(i, 0), bottom(i), EdgeKind::Kernel, &one + kappa_p, 0));
            edges.push(edge(top(i, 1), bottom(i), EdgeKind::Kernel, &one + kappa_p, 0));
        }
        // Pairings as drawn: the half-paired four-column case ties the outer
        // and the inner columns; otherwise sweep (t1b, t2a), (t2b, t3a), …
        // wrapping to (tq b, t1a). Lone tops are those never visited.
        if (q, pairs) == (4, 2) {
            edges.push(edge(top(1, 0), top(4, 1), EdgeKind::Rho, &two + kappa, -1));
            edges.push(edge(top(2, 1), top(3, 0), EdgeKind::Rho, &two + kappa, -1));
        } else {
            for p in 0..pairs {
                let i = p + 1;
                let j = if i == q { 1 } else { i + 1 };
                edges.push(edge(
                    top(i, 1),
                    top(j, 0),
                    EdgeKind::Rho,
                    &two + kappa,
                    -1,
                ));
            }
        }
        LabelledDiagram::new(2, v, star, edges).expect("fixture is well formed")
    }

    /// Power-nonlinearity diagram: `q` bottoms each with `n_factors` kernel
    /// edges `(2, 0)` from their tops; `pairs` autocorrelation edges
    /// `(4+κ, −1)` across tops of adjacent columns; lone tops get a
    /// bounded-function edge `(0, 0)` from their own bottom. Parabolic
    /// scaling `|𝔰| = 4`; checked against the weak variant.
    pub fn power_diagram(
        n_factors: usize,
        q: usize,
        pairs: usize,
        kappa: &BigRational,
    ) -> LabelledDiagram {
        assert!(n_factors >= 1 && q >= 1 && 2 * pairs <= n_factors * q);
        let mut v = vec!["star".to_string()];
        for i in 1..=q {
            v.push(format!("b{i}"));
        }
        for i in 1..=q {
            for r in 1..=n_factors {
                v.push(format!("t{i}_{r}"));
            }
        }
        let star = 0;
        let bottom = |i: usize| i;
        let top = |i: usize, r: usize| q + n_factors * (i - 1) + r;
        let mut edges = Vec::new();
        for i in 1..=q {
            edges.push(edge(star, bottom(i), EdgeKind::Test, BigRational::zero(), 0));
            for r in 1..=n_factors {
                edges.push(edge(top(i, r), bottom(i), EdgeKind::Kernel, rational(2), 0));
            }
        }
        // Pair tops in reading order across adjacent columns, round-robin.
        let all_tops: Vec<(usize, usize)> = (1..=q)
            .flat_map(|i| (1..=n_factors).map(move |r| (i, r)))
            .collect();
        let four = rational(4);
        let mut used = vec![false; all_tops.len()];
        let mut made = 0;
        'outer: for a in 0..all_tops.len() {
            if made == pairs {
                break;
            }
            if used[a] {
                continue;
            }
            for b in a + 1..all_tops.len() {
                if !used[b] && all_tops[b].0 != all_tops[a].0 {
                    used[a] = true;
                    used[b] = true;
                    let (i, r) = all_tops[a];
                    let (j, s) = all_tops[b];
                    edges.push(edge(
                        top(i, r),
                        top(j, s),
                        EdgeKind::Rho,
                        &four + kappa,
                        -1,
                    ));
                    made += 1;
                    continue 'outer;
                }
            }
        }
        assert_eq!(made, pairs, "could not realize the requested pairing");
        for (idx, &(i, r)) in all_tops.iter().enumerate() {
            if !used[idx] {
                edges.push(edge(bottom(i), top(i, r), EdgeKind::F, BigRational::zero(), 0));
            }
        }
        LabelledDiagram::new(4, v, star, edges).expect("fixture is well formed")
    }

    /// The reference suite at given `(κ, κ′, κ″)`: every encoded diagram with
    /// its name and designated assumption.
    ///
    /// The two diagrams whose fictitious edge ties a pair of top vertices
    /// (`two-column-bottom-rho`, `five-column-top-fictitious`) satisfy the
    /// full criterion only for `κ″` inside the window described at
    /// [`feasible_kappa_pp`]; with `κ″` as small as the other parameters the
    /// connectivity item fails on that pair.
    pub fn standard_suite(
        kappa: &BigRational,
        kappa_p: &BigRational,
        kappa_pp: &BigRational,
    ) -> Vec<(&'static str, LabelledDiagram, AssumptionKind)> {
        use TwoColumnWiring::*;
        let mut out: Vec<(&'static str, LabelledDiagram, AssumptionKind)> = vec![
            (
                "two-column-paired",
                two_column(PairedRows, kappa, kappa_p, kappa_pp),
                AssumptionKind::Full,
            ),
            (
                "two-column-crossed",
                two_column(Crossed, kappa, kappa_p, kappa_pp),
                AssumptionKind::Full,
            ),
            (
                "two-column-top-rho",
                two_column(TopRhoBottomFictitious, kappa, kappa_p, kappa_pp),
                AssumptionKind::Full,
            ),
            (
                "two-column-bottom-rho",
                two_column(BottomRhoTopFictitious, kappa, kappa_p, kappa_pp),
                AssumptionKind::Full,
            ),
            (
                "two-column-diagonal",
                two_column(DiagonalRhoFictitious, kappa, kappa_p, kappa_pp),
                AssumptionKind::Full,
            ),
            (
                "two-column-parallel-fictitious",
                two_column(ParallelFictitious, kappa, kappa_p, kappa_pp),
                AssumptionKind::Full,
            ),
        ];
        for w in 0..3 {
            let name = ["five-column-paired", "five-column-top-fictitious", "five-column-bottom-fictitious"][w];
            out.push((
                name,
                five_column(w, kappa, kappa_p, kappa_pp),
                AssumptionKind::Full,
            ));
        }
        out.push((
            "cherry-paired",
            cherry(2, 2, kappa, kappa_p),
            AssumptionKind::Weak,
        ));
        out.push((
            "cherry-lone",
            cherry(2, 1, kappa, kappa_p),
            AssumptionKind::Weak,
        ));
        out.push((
            "cherry-wide-paired",
            cherry(4, 4, kappa, kappa_p),
            AssumptionKind::Weak,
        ));
        out.push((
            "cherry-wide-lone",
            cherry(4, 2, kappa, kappa_p),
            AssumptionKind::Weak,
        ));
        out.push((
            "power-cubed",
            power_diagram(3, 4, 4, kappa),
            AssumptionKind::Weak,
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn k100() -> BigRational {
        BigRational::new(1.into(), 100.into())
    }

    fn check(d: &LabelledDiagram, kind: AssumptionKind) -> CheckReport {
        match kind {
            AssumptionKind::Full => check_assumption_full(d).unwrap(),
            AssumptionKind::Weak => check_assumption_weak(d).unwrap(),
        }
    }

    #[test]
    fn edge_sets_degenerate_and_reference_cases() {
        let d = two_column(TwoColumnWiring::PairedRows, &k100(), &k100(), &k100());
        let all: Vec<usize> = (0..d.num_vertices()).collect();
        let sets = edge_sets(&d, &all).unwrap();
        assert_eq!(sets.internal.len(), d.edges().len());
        assert!(sets.outgoing.is_empty() && sets.incoming.is_empty());
        let empty = edge_sets(&d, &[]).unwrap();
        assert!(empty.incident.is_empty() && empty.internal.is_empty());
        // Top pair {t1, t2}: internal = the top autocorrelation edge;
        // outgoing = the two renormalized kernel edges.
        let sets = edge_sets(&d, &[3, 4]).unwrap();
        assert_eq!(sets.internal.len(), 1);
        assert_eq!(d.edges()[sets.internal[0]].kind, EdgeKind::Rho);
        assert_eq!(sets.outgoing.len(), 2);
        for &i in &sets.outgoing {
            assert_eq!(d.edges()[i].kind, EdgeKind::Kernel);
        }
        assert!(edge_sets(&d, &[99]).is_err());
    }

    #[test]
    fn reference_suite_passes_designated_assumptions() {
        // With the fictitious label inside its feasibility window, every
        // reference diagram passes; likewise across a small-κ sweep.
        for k in [
            BigRational::new(1.into(), 100.into()),
            BigRational::new(1.into(), 10.into()),
            BigRational::new(1.into(), 4.into()),
        ] {
            let kpp = feasible_kappa_pp(&k);
            for (name, d, kind) in standard_suite(&k, &k, &kpp) {
                let report = check(&d, kind);
                assert!(report.passed, "{name} at κ={k}: {:#?}", report.items);
            }
        }
    }

    #[test]
    fn small_fictitious_label_breaks_top_pair_connectivity() {
        // With κ″ = 1/100 the fictitious edge is too light to carry a pair
        // of top vertices through the connectivity item: exactly the two
        // diagrams whose fictitious edge ties two tops fail, each with the
        // tied pair as the sole witness.
        let mut failed = Vec::new();
        for (name, d, kind) in standard_suite(&k100(), &k100(), &k100()) {
            let report = check(&d, kind);
            if !report.passed {
                let item4 = report.items.iter().find(|i| !i.passed).unwrap();
                assert_eq!(item4.item, 4, "{name}");
                assert_eq!(item4.total_violations, 1, "{name}");
                let witness = &item4.violations[0];
                assert_eq!(witness.subset.len(), 2);
                for &v in &witness.subset {
                    assert!(d.vertex_name(v).starts_with('t'));
                }
                // lhs = 3 + 2κ′ + κ″ = 303/100 against |𝕍̄||𝔰| = 4.
                assert_eq!(witness.lhs, BigRational::new(303.into(), 100.into()));
                assert_eq!(witness.rhs, rational(4));
                failed.push(name);
            }
        }
        assert_eq!(
            failed,
            vec!["two-column-bottom-rho", "five-column-top-fictitious"]
        );
    }

    #[test]
    fn paired_two_column_exponent_is_exact() {
        let d = two_column(TwoColumnWiring::PairedRows, &k100(), &k100(), &k100());
        // α̃ = 2·2 − (2κ′ + 2(2+κ)) = −2(κ+κ′) = −1/25 at κ = κ′ = 1/100.
        assert_eq!(
            compute_alpha_full(&d),
            BigRational::new((-1).into(), 25.into())
        );
        // All labels zero → α̃ = |𝔰|·|𝕍∖𝕍_⋆|.
        let zero = BigRational::zero();
        let bare = two_column(TwoColumnWiring::Bare, &zero, &zero, &zero);
        assert_eq!(compute_alpha_full(&bare), rational(4));
    }

    #[test]
    fn fictitious_edge_lowers_alpha_by_its_label() {
        let k = k100();
        let with_ = two_column(TwoColumnWiring::TopRhoBottomFictitious, &k, &k, &k);
        let without = {
            let edges: Vec<DiagramEdge> = with_
                .edges()
                .iter()
                .filter(|e| e.kind != EdgeKind::Fictitious)
                .cloned()
                .collect();
            LabelledDiagram::new(
                2,
                (0..with_.num_vertices())
                    .map(|v| with_.vertex_name(v).to_string())
                    .collect(),
                with_.star(),
                edges,
            )
            .unwrap()
        };
        let label = BigRational::one() + k;
        assert_eq!(
            compute_alpha_full(&without) - compute_alpha_full(&with_),
            label
        );
    }

    #[test]
    fn cherry_and_power_exponents_match_closed_forms() {
        let k = k100();
        // Lone cherry (q = 2, one pair → m = 2 lone tops):
        // α̃ = −q(2κ′+κ) + m(κ/2 + κ′) = −3/100 at κ = κ′ = 1/100.
        let lone = cherry(2, 1, &k, &k);
        assert_eq!(
            compute_alpha_weak(&lone).unwrap(),
            BigRational::new((-3).into(), 100.into())
        );
        // Defect witness: the two lone tops, R = m(1 − κ′).
        let (r, witness) = compute_r(&lone).unwrap();
        assert_eq!(r, rational(2) * (BigRational::one() - k.clone()));
        assert_eq!(witness.len(), 2);
        for &v in &witness {
            assert!(lone.vertex_name(v).starts_with('t'));
        }
        // Fully paired cherry: defect clips at zero.
        let paired = cherry(2, 2, &k, &k);
        assert_eq!(compute_r(&paired).unwrap().0, BigRational::zero());
        assert_eq!(
            compute_alpha_weak(&paired).unwrap(),
            BigRational::new((-3).into(), 50.into())
        );
        // Power diagram (N = 3, q = 4, 4 pairs → m = 4 lone tops):
        // R = 2m = 8 and α̃ = −(Nq − m)·κ/2 = −1/25.
        let p = power_diagram(3, 4, 4, &k);
        let (r, witness) = compute_r(&p).unwrap();
        assert_eq!(r, rational(8));
        assert_eq!(witness.len(), 4);
        assert_eq!(
            compute_alpha_weak(&p).unwrap(),
            BigRational::new((-1).into(), 25.into())
        );
    }

    #[test]
    fn isolated_vertex_defect_is_the_scaling_dimension() {
        // One extra integration vertex with no incident edges at all.
        let names: Vec<String> = ["star", "b1", "t1", "iso"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let edges = vec![
            DiagramEdge {
                from: 0,
                to: 1,
                kind: EdgeKind::Test,
                weight: BigRational::zero(),
                renorm: 0,
                centering: None,
            },
            DiagramEdge {
                from: 2,
                to: 1,
                kind: EdgeKind::Kernel,
                weight: rational(3),
                renorm: 0,
                centering: None,
            },
        ];
        let d = LabelledDiagram::new(2, names, 0, edges).unwrap();
        let (r, witness) = compute_r(&d).unwrap();
        assert_eq!(r, rational(2));
        assert_eq!(witness, vec![3]);
    }

    #[test]
    fn constructed_violations_fail_with_replayable_witnesses() {
        let k = k100();
        // Parallel kernel+fictitious pair at κ′ = 1: merged item 1 fails.
        let bad = two_column(
            TwoColumnWiring::ParallelFictitious,
            &k,
            &BigRational::one(),
            &k,
        );
        let report = check_assumption_full(&bad).unwrap();
        assert!(!report.passed);
        let item1 = &report.items[0];
        assert!(!item1.passed && !item1.violations.is_empty());
        for v in &item1.violations {
            let (lhs, rhs, holds) = replay_item(&bad, 1, &v.subset).unwrap();
            assert!(!holds);
            assert_eq!(lhs, v.lhs);
            assert_eq!(rhs, v.rhs);
        }
        // Bare two-column diagram (no pairing, no fictitious): item 4 fails.
        let bare = two_column(TwoColumnWiring::Bare, &k, &k, &k);
        let report = check_assumption_full(&bare).unwrap();
        assert!(!report.passed);
        let item4 = &report.items[3];
        assert!(!item4.passed);
        for v in &item4.violations {
            let (lhs, rhs, holds) = replay_item(&bare, 4, &v.subset).unwrap();
            assert!(!holds && lhs == v.lhs && rhs == v.rhs);
        }
        // Cherry with the autocorrelation label raised to 4 in spatial
        // scaling: weak item 2 fails.
        let heavy = cherry(2, 1, &rational(2), &k);
        assert_eq!(heavy.edges().iter().filter(|e| e.kind == EdgeKind::Rho).next().unwrap().weight, rational(4));
        let report = check_assumption_weak(&heavy).unwrap();
        assert!(!report.passed);
        let item2 = &report.items[1];
        assert!(!item2.passed);
        for v in &item2.violations {
            let (lhs, rhs, holds) = replay_item(&heavy, 2, &v.subset).unwrap();
            assert!(!holds && lhs == v.lhs && rhs == v.rhs);
        }
    }

    #[test]
    fn single_test_edge_diagram_passes_vacuously() {
        let names = vec!["star".to_string(), "v".to_string()];
        let edges = vec![DiagramEdge {
            from: 0,
            to: 1,
            kind: EdgeKind::Test,
            weight: BigRational::zero(),
            renorm: 0,
            centering: None,
        }];
        let d = LabelledDiagram::new(2, names, 0, edges).unwrap();
        let report = check_assumption_full(&d).unwrap();
        assert!(report.passed);
        assert_eq!(compute_alpha_full(&d), BigRational::zero());
    }

    #[test]
    fn text_format_round_trips_and_reports_errors() {
        let d = two_column(TwoColumnWiring::TopRhoBottomFictitious, &k100(), &k100(), &k100());
        let text = d.to_text();
        let back = parse_diagram(&text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.num_vertices(), d.num_vertices());
        assert_eq!(back.edges().len(), d.edges().len());
        assert_eq!(
            compute_alpha_full(&back),
            compute_alpha_full(&d)
        );

        let bad_header = "digraph |s|=2 star=s tests=a\n";
        assert!(matches!(
            parse_diagram(bad_header),
            Err(Error::ParseError { line: 1, .. })
        ));
        let bad_rational = "graph |s|=2 star=s tests=a\ns a test 0 0\nx a kernel one/2 0\n";
        assert!(matches!(
            parse_diagram(bad_rational),
            Err(Error::ParseError { line: 3, .. })
        ));
        let unknown_test = "graph |s|=2 star=s tests=zz\ns a test 0 0\n";
        assert!(matches!(
            parse_diagram(unknown_test),
            Err(Error::UnknownVertex(_))
        ));
        let mismatched = "graph |s|=2 star=s tests=a\ns a test 0 0\ns b test 0 0\n";
        assert!(matches!(
            parse_diagram(mismatched),
            Err(Error::InvalidDiagram(_))
        ));
    }

    #[test]
    fn validation_rejects_malformed_diagrams() {
        let names: Vec<String> = ["s", "a", "b"].iter().map(|x| x.to_string()).collect();
        let test_edge = DiagramEdge {
            from: 0,
            to: 1,
            kind: EdgeKind::Test,
            weight: BigRational::zero(),
            renorm: 0,
            centering: None,
        };
        // Renormalized edge touching the star.
        let bad = vec![
            test_edge.clone(),
            DiagramEdge {
                from: 2,
                to: 0,
                kind: EdgeKind::Kernel,
                weight: rational(1),
                renorm: 1,
                centering: None,
            },
        ];
        assert!(matches!(
            LabelledDiagram::new(2, names.clone(), 0, bad),
            Err(Error::InvalidDiagram(_))
        ));
        // Two renormalized parallel edges.
        let bad = vec![
            test_edge.clone(),
            DiagramEdge {
                from: 2,
                to: 1,
                kind: EdgeKind::Kernel,
                weight: rational(1),
                renorm: 1,
                centering: None,
            },
            DiagramEdge {
                from: 2,
                to: 1,
                kind: EdgeKind::Rho,
                weight: rational(2),
                renorm: -1,
                centering: None,
            },
        ];
        assert!(matches!(
            LabelledDiagram::new(2, names.clone(), 0, bad),
            Err(Error::InvalidDiagram(_))
        ));
        // Oversize diagram triggers the enumeration guard.
        let mut many: Vec<String> = (0..26).map(|i| format!("v{i}")).collect();
        many[0] = "s".into();
        let edges = vec![DiagramEdge {
            from: 0,
            to: 1,
            kind: EdgeKind::Test,
            weight: BigRational::zero(),
            renorm: 0,
            centering: None,
        }];
        let big = LabelledDiagram::new(2, many, 0, edges).unwrap();
        assert!(matches!(
            check_assumption_full(&big),
            Err(Error::TooLarge { vertices: 26, .. })
        ));
    }

    #[test]
    fn json_report_contains_exact_values() {
        let d = cherry(2, 1, &k100(), &k100());
        let report = check_assumption_weak(&d).unwrap();
        let json = report.to_json(&d);
        assert_eq!(json["alpha"], "-3/100");
        assert_eq!(json["passed"], true);
        assert_eq!(json["assumption"], "weak");
        let defect = &json["defect"];
        assert_eq!(defect["value"], "99/50");
    }
}
