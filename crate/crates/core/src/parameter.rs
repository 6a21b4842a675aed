//! Lazy tree-pair parameters over a forged graph sequence.
//!
//! Both trees consist of digit strings: a node at level `k` is an
//! `eta: [0..k) -> digits` with `eta(j) < m_j`.  The level relation links a
//! left and a right node of equal level when every coordinate pair is an
//! edge of that level's graph; lazy levels (level function bit 0) use the
//! complete graph with loops instead of the forged one.  Because the
//! relation factors through coordinates, membership is cheap, and the
//! axioms of a basic parameter reduce to digit-level statements that can be
//! swept exhaustively at desk scale.

use std::collections::HashMap;
use std::sync::RwLock;

use crate::graphforge::GoodSequence;
use crate::{Error, Result};

/// Cap on memoized relation entries.
const MEMO_CAP: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Left,
    Right,
}

/// A tree node: its side and digit string.  The level is the string length.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Node {
    pub side: Side,
    pub digits: Vec<u16>,
}

impl Node {
    pub fn level(&self) -> usize {
        self.digits.len()
    }
}

/// Which levels use their forged graph (bit 1) rather than the complete
/// graph (bit 0).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelFunction {
    pub bits: Vec<bool>,
    pub i_star: usize,
}

impl LevelFunction {
    pub fn new(bits: Vec<bool>, i_star: usize) -> Result<LevelFunction> {
        if bits.is_empty() {
            return Err(Error::InvalidQuery("level function window is empty".into()));
        }
        if !bits.iter().skip(i_star).any(|&b| b) {
            return Err(Error::InvalidQuery(
                "level function must activate some level at or above i_star".into(),
            ));
        }
        Ok(LevelFunction { bits, i_star })
    }

    pub fn from_bit_string(s: &str, i_star: usize) -> Result<LevelFunction> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::InvalidQuery(format!("bad level bit {c:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        LevelFunction::new(bits, i_star)
    }

    pub fn active(&self, k: usize) -> bool {
        self.bits.get(k).copied().unwrap_or(false)
    }

    /// Does the window start with an active level?  One convention demands
    /// this; the other forbids activity below `i_star`.  Both are accepted
    /// and merely reported.
    pub fn initial_level_active(&self) -> bool {
        self.active(0)
    }

    pub fn zero_below_i_star(&self) -> bool {
        (0..self.i_star).all(|k| !self.active(k))
    }
}

/// Anything that exposes a level relation between two trees.  Implemented
/// by [`Parameter`] (digit product trees) and by the hand-authored
/// [`WarmupFixture`] (irregular trees with explicit relation tables).
pub trait LevelRelation {
    /// Largest usable relation level.
    fn depth(&self) -> usize;
    fn left_nodes(&self, k: usize) -> Vec<Vec<u16>>;
    fn right_nodes(&self, k: usize) -> Vec<Vec<u16>>;
    /// Child digits available below a node of the given side.
    fn children(&self, side: Side, prefix: &[u16]) -> Vec<u16>;
    /// Is the (left, right) pair of equal-level nodes related?
    fn related(&self, left: &[u16], right: &[u16]) -> Result<bool>;
}

/// A parameter: forged graphs plus a level function, with a memoized
/// relation.  The transposed flag realizes the dual parameter.
pub struct Parameter {
    pub graphs: GoodSequence,
    pub xi: LevelFunction,
    pub transposed: bool,
    memo: RwLock<HashMap<(Vec<u16>, Vec<u16>), bool>>,
}

impl Clone for Parameter {
    fn clone(&self) -> Self {
        Parameter {
            graphs: self.graphs.clone(),
            xi: self.xi.clone(),
            transposed: self.transposed,
            memo: RwLock::new(HashMap::new()),
        }
    }
}

impl std::fmt::Debug for Parameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Parameter")
            .field("depth", &self.depth())
            .field("xi", &self.xi)
            .field("transposed", &self.transposed)
            .finish()
    }
}

impl Parameter {
    pub fn new(graphs: GoodSequence, xi: LevelFunction) -> Result<Parameter> {
        if xi.bits.len() < graphs.depth() {
            return Err(Error::InvalidQuery(format!(
                "level function window {} shorter than forged depth {}",
                xi.bits.len(),
                graphs.depth()
            )));
        }
        if xi.i_star != graphs.profile.i_star {
            return Err(Error::InvalidQuery(
                "level function and profile disagree on i_star".into(),
            ));
        }
        Ok(Parameter {
            graphs,
            xi,
            transposed: false,
            memo: RwLock::new(HashMap::new()),
        })
    }

    pub fn width(&self, k: usize) -> Result<usize> {
        self.graphs.profile.width(k)
    }

    /// Edge test at level `k` honoring laziness and transposition.
    pub fn level_edge(&self, k: usize, left_digit: u16, right_digit: u16) -> Result<bool> {
        let g = self
            .graphs
            .levels
            .get(k)
            .ok_or_else(|| Error::InvalidQuery(format!("no forged level {k}")))?;
        if (left_digit as usize) >= g.n || (right_digit as usize) >= g.n {
            return Err(Error::InvalidQuery(format!(
                "digit out of range at level {k}"
            )));
        }
        if !self.xi.active(k) {
            return Ok(true);
        }
        let (a, b) = if self.transposed {
            (right_digit, left_digit)
        } else {
            (left_digit, right_digit)
        };
        Ok(g.has_edge(a as usize, b as usize))
    }

    /// Membership in the level relation, memoized.
    pub fn r_edge(&self, left: &[u16], right: &[u16]) -> Result<bool> {
        if left.len() != right.len() {
            return Err(Error::InvalidQuery(
                "related nodes must sit at the same level".into(),
            ));
        }
        if left.len() > self.depth() {
            return Err(Error::InvalidQuery(format!(
                "level {} beyond forged depth {}",
                left.len(),
                self.depth()
            )));
        }
        if left.is_empty() {
            return Ok(true);
        }
        let key = (left.to_vec(), right.to_vec());
        if let Some(&v) = self.memo.read().unwrap().get(&key) {
            return Ok(v);
        }
        let mut v = true;
        for j in 0..left.len() {
            if !self.level_edge(j, left[j], right[j])? {
                v = false;
                break;
            }
        }
        let mut memo = self.memo.write().unwrap();
        if memo.len() < MEMO_CAP {
            memo.insert(key, v);
        }
        Ok(v)
    }

    /// The dual parameter: sides swapped, every relation level transposed.
    pub fn dual(&self) -> Parameter {
        Parameter {
            graphs: self.graphs.clone(),
            xi: self.xi.clone(),
            transposed: !self.transposed,
            memo: RwLock::new(HashMap::new()),
        }
    }
}

fn enumerate_nodes(widths: &[usize]) -> Vec<Vec<u16>> {
    let mut out = vec![vec![]];
    for &w in widths {
        let mut next = Vec::with_capacity(out.len() * w);
        for base in &out {
            for d in 0..w {
                let mut n = base.clone();
                n.push(d as u16);
                next.push(n);
            }
        }
        out = next;
    }
    out
}

impl LevelRelation for Parameter {
    fn depth(&self) -> usize {
        self.graphs.depth()
    }

    fn left_nodes(&self, k: usize) -> Vec<Vec<u16>> {
        let widths: Vec<usize> = (0..k)
            .map(|j| self.graphs.levels[j].n)
            .collect();
        enumerate_nodes(&widths)
    }

    fn right_nodes(&self, k: usize) -> Vec<Vec<u16>> {
        self.left_nodes(k)
    }

    fn children(&self, _side: Side, prefix: &[u16]) -> Vec<u16> {
        match self.graphs.levels.get(prefix.len()) {
            Some(g) => (0..g.n as u16).collect(),
            None => Vec::new(),
        }
    }

    fn related(&self, left: &[u16], right: &[u16]) -> Result<bool> {
        self.r_edge(left, right)
    }
}

/// Duality report at desk scale, including which window convention the
/// level function satisfies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DualityReport {
    pub self_dual: bool,
    pub zero_below_i_star: bool,
    pub initial_level_active: bool,
}

/// A parameter is self-dual exactly when every level relation is symmetric;
/// verified digit by digit against the forged graphs.
pub fn is_self_dual(param: &Parameter) -> Result<DualityReport> {
    let mut self_dual = true;
    'levels: for (k, g) in param.graphs.levels.iter().enumerate() {
        if !param.xi.active(k) {
            continue;
        }
        for a in 0..g.n {
            for b in 0..g.n {
                if g.has_edge(a, b) != g.has_edge(b, a) {
                    self_dual = false;
                    break 'levels;
                }
            }
        }
    }
    Ok(DualityReport {
        self_dual,
        zero_below_i_star: param.xi.zero_below_i_star(),
        initial_level_active: param.xi.initial_level_active(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AxiomFailure {
    /// A related pair whose parents are not related.
    Monotone { level: usize, left: Vec<u16>, right: Vec<u16> },
    /// The relation died out entirely at some level.
    EmptyLevel { level: usize },
    /// A digit with fewer than two related successor digits.
    TwoSuccessors { level: usize, side: Side, digit: u16 },
    /// A lazy level with a missing pair.
    LazyComplete { level: usize, a: u16, b: u16 },
    /// A digit set of size at most `level` with fewer than `level + 1`
    /// common successor witnesses.
    Extension {
        level: usize,
        side: Side,
        digits: Vec<u16>,
        witnesses: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AxiomReport {
    pub depth: usize,
    pub failures: Vec<AxiomFailure>,
}

impl AxiomReport {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

fn subsets_upto(m: usize, max: usize) -> Vec<Vec<u16>> {
    let mut out: Vec<Vec<u16>> = vec![vec![]];
    let mut frontier: Vec<Vec<u16>> = vec![vec![]];
    for _ in 0..max {
        let mut next = Vec::new();
        for s in &frontier {
            let start = s.last().map(|&d| d + 1).unwrap_or(0);
            for d in start..m as u16 {
                let mut t = s.clone();
                t.push(d);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Exhaustively verify the basic-parameter axioms and the extension axioms
/// down to `depth`.
///
/// The node-level statements factor through coordinates: a pair of level
/// `k+1` nodes is related exactly when the parents are related and the last
/// digits form an edge, so monotonicity is swept over full node pairs while
/// the successor and extension axioms are swept over digit sets, which
/// covers all node-level instances because every related parent contributes
/// all of its children.
pub fn check_axioms(param: &Parameter, depth: usize, budget: u64) -> Result<AxiomReport> {
    if depth > param.depth() {
        return Err(Error::InvalidQuery(format!(
            "axiom depth {depth} beyond forged depth {}",
            param.depth()
        )));
    }
    let mut failures = Vec::new();

    // pair sweep: monotonicity, laziness, non-emptiness
    let mut cost: u64 = 0;
    for k in 0..=depth {
        let cnt = param.graphs.profile.level_product(k)? as u64;
        cost = cnt
            .checked_mul(cnt)
            .and_then(|sq| cost.checked_add(sq))
            .ok_or_else(|| Error::Capacity("axiom sweep too large".into()))?;
    }
    if cost > budget {
        return Err(Error::Capacity(format!(
            "axiom sweep needs {cost} pairs, budget is {budget}"
        )));
    }
    for k in 1..=depth {
        let lefts = param.left_nodes(k);
        let rights = param.right_nodes(k);
        let mut any = false;
        for l in &lefts {
            for r in &rights {
                if param.r_edge(l, r)? {
                    any = true;
                    if !param.r_edge(&l[..k - 1], &r[..k - 1])? {
                        failures.push(AxiomFailure::Monotone {
                            level: k,
                            left: l.clone(),
                            right: r.clone(),
                        });
                    }
                } else if !param.xi.active(k - 1)
                    && param.r_edge(&l[..k - 1], &r[..k - 1])?
                {
                    failures.push(AxiomFailure::LazyComplete {
                        level: k,
                        a: l[k - 1],
                        b: r[k - 1],
                    });
                }
            }
        }
        if !any {
            failures.push(AxiomFailure::EmptyLevel { level: k });
        }
    }

    // digit sweeps: two successors and extension witnesses
    for k in 0..depth {
        let m = param.width(k)?;
        for side in [Side::Left, Side::Right] {
            let edge = |t: u16, d: u16| -> Result<bool> {
                match side {
                    Side::Left => param.level_edge(k, t, d),
                    Side::Right => param.level_edge(k, d, t),
                }
            };
            for d in 0..m as u16 {
                let mut succ = 0;
                for t in 0..m as u16 {
                    if edge(t, d)? {
                        succ += 1;
                    }
                }
                if succ < 2 {
                    failures.push(AxiomFailure::TwoSuccessors {
                        level: k,
                        side,
                        digit: d,
                    });
                }
            }
            for ds in subsets_upto(m, k) {
                let mut wit = 0;
                for t in 0..m as u16 {
                    let mut all = true;
                    for &d in &ds {
                        if !edge(t, d)? {
                            all = false;
                            break;
                        }
                    }
                    if all {
                        wit += 1;
                    }
                }
                if wit < k + 1 {
                    failures.push(AxiomFailure::Extension {
                        level: k,
                        side,
                        digits: ds,
                        witnesses: wit,
                    });
                }
            }
        }
    }

    Ok(AxiomReport { depth, failures })
}

/// Smallest successor digit of a left node related to every target, if any.
///
/// Guaranteed to return `Some` whenever the targets' last digits form a set
/// of size at most the level's small threshold (covering property of a
/// verified level).
pub fn find_successor_witness(
    param: &Parameter,
    nu: &[u16],
    targets: &[Vec<u16>],
) -> Result<Option<u16>> {
    let k = nu.len();
    if k >= param.depth() {
        return Err(Error::InvalidQuery(format!(
            "node level {k} has no successors below forged depth {}",
            param.depth()
        )));
    }
    for t in targets {
        if t.len() != k + 1 {
            return Err(Error::InvalidQuery(
                "targets must sit one level below the node".into(),
            ));
        }
        if !param.r_edge(nu, &t[..k])? {
            return Err(Error::InvalidQuery(
                "target parent is not related to the node".into(),
            ));
        }
    }
    'digit: for d in 0..param.width(k)? as u16 {
        for t in targets {
            if !param.level_edge(k, d, t[k])? {
                continue 'digit;
            }
        }
        return Ok(Some(d));
    }
    Ok(None)
}

/// A finite restriction of a relation level to chosen node sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReducedGraph {
    pub level: usize,
    pub left: Vec<Vec<u16>>,
    pub right: Vec<Vec<u16>>,
    /// Index pairs into `left` and `right`.
    pub edges: Vec<(usize, usize)>,
}

impl ReducedGraph {
    pub fn is_complete(&self) -> bool {
        self.edges.len() == self.left.len() * self.right.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

pub fn reduced_graph<R: LevelRelation + ?Sized>(
    rel: &R,
    k: usize,
    left: &[Vec<u16>],
    right: &[Vec<u16>],
) -> Result<ReducedGraph> {
    if k > rel.depth() {
        return Err(Error::InvalidQuery(format!(
            "level {k} beyond relation depth {}",
            rel.depth()
        )));
    }
    for n in left.iter().chain(right.iter()) {
        if n.len() != k {
            return Err(Error::InvalidQuery(
                "reduced graph nodes must sit at the requested level".into(),
            ));
        }
    }
    let mut edges = Vec::new();
    for (i, l) in left.iter().enumerate() {
        for (j, r) in right.iter().enumerate() {
            if rel.related(l, r)? {
                edges.push((i, j));
            }
        }
    }
    Ok(ReducedGraph {
        level: k,
        left: left.to_vec(),
        right: right.to_vec(),
        edges,
    })
}

/// The worked two-tree fixture with irregular branching and an explicit,
/// deliberately asymmetric relation table.  Serves as golden data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WarmupFixture {
    t1: Vec<Vec<Vec<u16>>>,
    t2: Vec<Vec<Vec<u16>>>,
    relations: Vec<Vec<(Vec<u16>, Vec<u16>)>>,
}

pub fn load_warmup() -> WarmupFixture {
    fn nodes(strs: &[&str]) -> Vec<Vec<u16>> {
        strs.iter()
            .map(|s| s.chars().map(|c| c.to_digit(10).unwrap() as u16).collect())
            .collect()
    }
    let t1 = vec![
        nodes(&[""]),
        nodes(&["0", "1"]),
        nodes(&["00", "01", "02", "10", "11", "12"]),
    ];
    let t2 = vec![
        nodes(&[""]),
        nodes(&["0", "1", "2"]),
        nodes(&[
            "00", "01", "02", "10", "11", "12", "13", "20", "21", "22", "23",
        ]),
    ];
    fn pairs(strs: &[(&str, &str)]) -> Vec<(Vec<u16>, Vec<u16>)> {
        strs.iter()
            .map(|(l, r)| {
                (
                    l.chars().map(|c| c.to_digit(10).unwrap() as u16).collect(),
                    r.chars().map(|c| c.to_digit(10).unwrap() as u16).collect(),
                )
            })
            .collect()
    }
    let relations = vec![
        pairs(&[("", "")]),
        pairs(&[("0", "0"), ("0", "1"), ("1", "2")]),
        pairs(&[
            ("00", "00"),
            ("00", "10"),
            ("01", "01"),
            ("01", "02"),
            ("01", "12"),
            ("01", "13"),
            ("02", "01"),
            ("02", "02"),
            ("02", "10"),
            ("02", "11"),
            ("10", "20"),
            ("11", "20"),
            ("12", "21"),
            ("12", "22"),
            ("12", "23"),
        ]),
    ];
    WarmupFixture { t1, t2, relations }
}

impl WarmupFixture {
    pub fn relation_size(&self, k: usize) -> usize {
        self.relations[k].len()
    }

    pub fn level_width(&self, side: Side, k: usize) -> usize {
        match side {
            Side::Left => self.t1[k].len(),
            Side::Right => self.t2[k].len(),
        }
    }
}

impl LevelRelation for WarmupFixture {
    fn depth(&self) -> usize {
        self.relations.len() - 1
    }

    fn left_nodes(&self, k: usize) -> Vec<Vec<u16>> {
        self.t1.get(k).cloned().unwrap_or_default()
    }

    fn right_nodes(&self, k: usize) -> Vec<Vec<u16>> {
        self.t2.get(k).cloned().unwrap_or_default()
    }

    fn children(&self, side: Side, prefix: &[u16]) -> Vec<u16> {
        let tree = match side {
            Side::Left => &self.t1,
            Side::Right => &self.t2,
        };
        match tree.get(prefix.len() + 1) {
            Some(level) => level
                .iter()
                .filter(|n| n[..prefix.len()] == *prefix)
                .map(|n| n[prefix.len()])
                .collect(),
            None => Vec::new(),
        }
    }

    fn related(&self, left: &[u16], right: &[u16]) -> Result<bool> {
        if left.len() != right.len() {
            return Err(Error::InvalidQuery(
                "related nodes must sit at the same level".into(),
            ));
        }
        let k = left.len();
        if k >= self.relations.len() {
            return Err(Error::InvalidQuery(format!(
                "level {k} beyond fixture depth {}",
                self.depth()
            )));
        }
        Ok(self.relations[k]
            .iter()
            .any(|(l, r)| l == left && r == right))
    }
}
