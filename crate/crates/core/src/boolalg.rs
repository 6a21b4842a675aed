//! Finite atom-based Boolean algebras: independent-partition generators,
//! possibility patterns built from parameters, free extensions carrying a
//! canonical multiplicative solution, the collapse construction for
//! random-graph style problems, chain-condition witness extraction, and
//! the obstruction identity that mirrors the graph degree bound.
//!
//! Everything is atom-exact.  The algebras here are finite, hence
//! complete, so the completion step of the abstract construction is the
//! identity and is never represented.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::parameter::{LevelRelation, Parameter};
use crate::setcomb;
use crate::{Error, Result};

/// Hard cap on atom universes.
pub const ATOM_BUDGET: usize = 1 << 20;

static NEXT_UNIVERSE: AtomicU64 = AtomicU64::new(1);

fn fresh_universe() -> u64 {
    NEXT_UNIVERSE.fetch_add(1, Ordering::Relaxed)
}

/// An element of a finite algebra: a bitset over the atom universe,
/// tagged so cross-universe operations fail loudly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Element {
    universe: u64,
    bits: Vec<u64>,
}

impl Element {
    pub fn universe(&self) -> u64 {
        self.universe
    }

    pub fn contains(&self, atom: usize) -> bool {
        self.bits[atom / 64] >> (atom % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    /// Sorted atom indices, the canonical serialization.
    pub fn atoms(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.count());
        for (i, &w) in self.bits.iter().enumerate() {
            let mut w = w;
            while w != 0 {
                let b = w.trailing_zeros() as usize;
                out.push(i * 64 + b);
                w &= w - 1;
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!(self.atoms())
    }
}

/// A finite Boolean algebra given by its atom universe, optionally
/// structured as a product of independent partitions (atoms are then the
/// total functions picking one block per partition, mixed radix).
#[derive(Clone, Debug)]
pub struct FiniteBa {
    universe: u64,
    pub atom_count: usize,
    pub partitions: Option<Vec<usize>>,
}

impl FiniteBa {
    pub fn new(atom_count: usize) -> Result<FiniteBa> {
        if atom_count == 0 || atom_count > ATOM_BUDGET {
            return Err(Error::Capacity(format!(
                "atom count {atom_count} outside 1..={ATOM_BUDGET}"
            )));
        }
        Ok(FiniteBa {
            universe: fresh_universe(),
            atom_count,
            partitions: None,
        })
    }

    /// Product algebra of independent partitions with the given block
    /// counts.
    pub fn with_partitions(blocks: Vec<usize>) -> Result<FiniteBa> {
        let mut n = 1usize;
        for &b in &blocks {
            if b == 0 {
                return Err(Error::InvalidQuery("partition with no blocks".into()));
            }
            n = n
                .checked_mul(b)
                .filter(|&n| n <= ATOM_BUDGET)
                .ok_or_else(|| Error::Capacity("partition product too large".into()))?;
        }
        let mut ba = FiniteBa::new(n)?;
        ba.partitions = Some(blocks);
        Ok(ba)
    }

    pub fn universe(&self) -> u64 {
        self.universe
    }

    fn words(&self) -> usize {
        (self.atom_count + 63) / 64
    }

    fn check(&self, e: &Element) -> Result<()> {
        if e.universe != self.universe {
            return Err(Error::UniverseMismatch(format!(
                "element universe {} vs algebra {}",
                e.universe, self.universe
            )));
        }
        Ok(())
    }

    pub fn zero(&self) -> Element {
        Element {
            universe: self.universe,
            bits: vec![0; self.words()],
        }
    }

    pub fn one(&self) -> Element {
        let mut e = self.zero();
        for a in 0..self.atom_count {
            e.bits[a / 64] |= 1 << (a % 64);
        }
        e
    }

    pub fn atom(&self, i: usize) -> Result<Element> {
        if i >= self.atom_count {
            return Err(Error::InvalidQuery(format!("no atom {i}")));
        }
        let mut e = self.zero();
        e.bits[i / 64] |= 1 << (i % 64);
        Ok(e)
    }

    pub fn from_atoms(&self, atoms: &[usize]) -> Result<Element> {
        let mut e = self.zero();
        for &a in atoms {
            if a >= self.atom_count {
                return Err(Error::InvalidQuery(format!("no atom {a}")));
            }
            e.bits[a / 64] |= 1 << (a % 64);
        }
        Ok(e)
    }

    pub fn from_json(&self, v: &serde_json::Value) -> Result<Element> {
        let arr = v
            .as_array()
            .ok_or_else(|| Error::Serialization("element must be an atom list".into()))?;
        let atoms: Vec<usize> = arr
            .iter()
            .map(|x| {
                x.as_u64()
                    .map(|n| n as usize)
                    .ok_or_else(|| Error::Serialization("bad atom index".into()))
            })
            .collect::<Result<_>>()?;
        self.from_atoms(&atoms)
    }

    pub fn meet(&self, a: &Element, b: &Element) -> Result<Element> {
        self.check(a)?;
        self.check(b)?;
        let mut out = a.clone();
        for (w, &bw) in out.bits.iter_mut().zip(&b.bits) {
            *w &= bw;
        }
        Ok(out)
    }

    pub fn join(&self, a: &Element, b: &Element) -> Result<Element> {
        self.check(a)?;
        self.check(b)?;
        let mut out = a.clone();
        for (w, &bw) in out.bits.iter_mut().zip(&b.bits) {
            *w |= bw;
        }
        Ok(out)
    }

    pub fn complement(&self, a: &Element) -> Result<Element> {
        self.check(a)?;
        let mut out = self.one();
        for (w, &aw) in out.bits.iter_mut().zip(&a.bits) {
            *w &= !aw;
        }
        Ok(out)
    }

    pub fn leq(&self, a: &Element, b: &Element) -> Result<bool> {
        self.check(a)?;
        self.check(b)?;
        Ok(a.bits.iter().zip(&b.bits).all(|(&aw, &bw)| aw & !bw == 0))
    }

    /// Pairwise disjoint nonzero elements whose join is the unit.
    pub fn maximal_antichain_check(&self, parts: &[Element]) -> Result<bool> {
        let mut seen = self.zero();
        for p in parts {
            self.check(p)?;
            if p.is_zero() {
                return Ok(false);
            }
            if !self.meet(p, &seen)?.is_zero() {
                return Ok(false);
            }
            seen = self.join(&seen, p)?;
        }
        Ok(seen == self.one())
    }

    /// The block index of `atom` in partition `p` (mixed radix, least
    /// significant partition first).
    pub fn atom_digit(&self, atom: usize, p: usize) -> Result<usize> {
        let blocks = self
            .partitions
            .as_ref()
            .ok_or_else(|| Error::InvalidQuery("algebra has no partition structure".into()))?;
        if p >= blocks.len() {
            return Err(Error::InvalidQuery(format!("no partition {p}")));
        }
        let stride: usize = blocks[..p].iter().product();
        Ok(atom / stride % blocks[p])
    }

    /// Generator `x_f` for a finite partial function partition -> block.
    /// `x` of the empty function is the unit; extending the function
    /// shrinks the element; incompatible functions meet in zero.
    pub fn x_f(&self, f: &BTreeMap<usize, usize>) -> Result<Element> {
        let blocks = self
            .partitions
            .as_ref()
            .ok_or_else(|| Error::InvalidQuery("algebra has no partition structure".into()))?;
        for (&p, &b) in f {
            if p >= blocks.len() || b >= blocks[p] {
                return Err(Error::InvalidQuery(format!("bad assignment {p}->{b}")));
            }
        }
        let mut e = self.zero();
        'atoms: for a in 0..self.atom_count {
            for (&p, &b) in f {
                if self.atom_digit(a, p)? != b {
                    continue 'atoms;
                }
            }
            e.bits[a / 64] |= 1 << (a % 64);
        }
        Ok(e)
    }
}

/// Monotone map from subsets of `theta` (as bitmasks) into the algebra,
/// with the empty set mapped to the unit.  The optional provenance ties
/// the atoms back to a parameter's right tree so obstruction queries can
/// pin coordinates.
#[derive(Clone, Debug)]
pub struct PossibilityPattern {
    pub ba: FiniteBa,
    pub theta: usize,
    /// Indexed by subset mask; `b[0]` is the unit.
    pub b: Vec<Element>,
    pub provenance: Option<PatternProvenance>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatternProvenance {
    pub depth: usize,
    /// Branching width at each tree level below `depth`.
    pub widths: Vec<usize>,
}

impl PossibilityPattern {
    pub fn new(ba: FiniteBa, theta: usize, b: Vec<Element>) -> Result<PossibilityPattern> {
        if theta > 16 || b.len() != 1 << theta {
            return Err(Error::InvalidQuery("need one element per subset".into()));
        }
        if b[0] != ba.one() {
            return Err(Error::InvalidQuery("empty set must map to the unit".into()));
        }
        for (mask, e) in b.iter().enumerate() {
            ba.check(e)?;
            for alpha in 0..theta {
                if mask >> alpha & 1 == 1 {
                    let sub = mask & !(1 << alpha);
                    if !ba.leq(e, &b[sub])? {
                        return Err(Error::InvalidQuery(format!(
                            "pattern not monotone at mask {mask}"
                        )));
                    }
                }
            }
        }
        Ok(PossibilityPattern {
            ba,
            theta,
            b,
            provenance: None,
        })
    }

    pub fn full_mask(&self) -> u16 {
        ((1u32 << self.theta) - 1) as u16
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (mask, e) in self.b.iter().enumerate() {
            let u: Vec<usize> = (0..self.theta).filter(|a| mask >> a & 1 == 1).collect();
            map.insert(serde_json::json!(u).to_string(), e.to_json());
        }
        serde_json::json!({ "version": 1, "theta": self.theta, "b": map })
    }
}

/// Build the pattern of a parameter at one right-tree depth: atoms choose
/// a right node for every index, and a subset is possible on an atom when
/// some left node relates to all of its chosen right nodes at once.
pub fn pattern_from_parameter(
    param: &Parameter,
    depth: usize,
    theta: usize,
) -> Result<PossibilityPattern> {
    if theta > 16 {
        return Err(Error::InvalidQuery("theta too large".into()));
    }
    let widths: Vec<usize> = (0..depth).map(|k| param.width(k)).collect::<Result<_>>()?;
    let blocks: Vec<usize> = (0..theta).flat_map(|_| widths.iter().copied()).collect();
    let ba = FiniteBa::with_partitions(blocks)?;

    // one relation row per right node, in the same mixed-radix order the
    // atom digits use
    let node_count: usize = widths.iter().product();
    let right_of = |mut idx: usize| -> Vec<u16> {
        let mut node = Vec::with_capacity(depth);
        for &w in &widths {
            node.push((idx % w) as u16);
            idx /= w;
        }
        node
    };
    let lefts = param.left_nodes(depth);
    let mut related = vec![vec![false; node_count]; lefts.len()];
    for (l, left) in lefts.iter().enumerate() {
        for r in 0..node_count {
            related[l][r] = param.r_edge(left, &right_of(r))?;
        }
    }

    let stride: usize = node_count;
    let mut b = Vec::with_capacity(1 << theta);
    for mask in 0..1u32 << theta {
        let mut e = ba.zero();
        'atoms: for atom in 0..ba.atom_count {
            for row in &related {
                let mut idx = atom;
                let mut ok = true;
                for alpha in 0..theta {
                    let r = idx % stride;
                    idx /= stride;
                    if mask >> alpha & 1 == 1 && !row[r] {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    e.bits[atom / 64] |= 1 << (atom % 64);
                    continue 'atoms;
                }
            }
        }
        b.push(e);
    }
    let mut pattern = PossibilityPattern::new(ba, theta, b)?;
    pattern.provenance = Some(PatternProvenance { depth, widths });
    Ok(pattern)
}

/// An algebra extension with its atom-level projection back to the base.
#[derive(Clone, Debug)]
pub struct Extension {
    pub base: FiniteBa,
    pub ext: FiniteBa,
    /// Base atom under each extension atom.
    pub base_atom: Vec<u32>,
}

impl Extension {
    pub fn embed(&self, x: &Element) -> Result<Element> {
        self.base.check(x)?;
        let mut e = self.ext.zero();
        for (i, &a) in self.base_atom.iter().enumerate() {
            if x.contains(a as usize) {
                e.bits[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(e)
    }
}

/// A candidate multiplicative solution: one element per index, with the
/// meet over any subset intended to sit below the pattern's element.
#[derive(Clone, Debug)]
pub struct Solution {
    pub theta: usize,
    pub b1: Vec<Element>,
}

impl Solution {
    pub fn meet_over(&self, ba: &FiniteBa, mask: u16) -> Result<Element> {
        let mut e = ba.one();
        for alpha in 0..self.theta {
            if mask >> alpha & 1 == 1 {
                e = ba.meet(&e, &self.b1[alpha])?;
            }
        }
        Ok(e)
    }

    pub fn join_over(&self, ba: &FiniteBa, mask: u16) -> Result<Element> {
        let mut e = ba.zero();
        for alpha in 0..self.theta {
            if mask >> alpha & 1 == 1 {
                e = ba.join(&e, &self.b1[alpha])?;
            }
        }
        Ok(e)
    }
}

/// The free extension of a pattern's algebra: new atoms are (old atom,
/// subset) pairs with the old atom inside the subset's pattern element.
#[derive(Clone, Debug)]
pub struct FreeExtension {
    pub extension: Extension,
    pub pattern: PossibilityPattern,
    /// Subset mask carried by each extension atom.
    pub masks: Vec<u16>,
    pub solution: Solution,
}

/// Extend freely by the pattern's equations.  The finite realization is
/// unique up to isomorphism, which is what makes the classical claims
/// about the construction directly checkable here.
pub fn free_extension(pattern: &PossibilityPattern) -> Result<FreeExtension> {
    let base = &pattern.ba;
    let mut base_atom = Vec::new();
    let mut masks = Vec::new();
    for mask in 0..1u32 << pattern.theta {
        for a in pattern.b[mask as usize].atoms() {
            base_atom.push(a as u32);
            masks.push(mask as u16);
        }
    }
    let ext = FiniteBa::new(base_atom.len())?;
    // sort pairs by (base atom, mask) so atom order is canonical
    let mut order: Vec<usize> = (0..base_atom.len()).collect();
    order.sort_by_key(|&i| (base_atom[i], masks[i]));
    let base_atom: Vec<u32> = order.iter().map(|&i| base_atom[i]).collect();
    let masks: Vec<u16> = order.iter().map(|&i| masks[i]).collect();

    let extension = Extension {
        base: base.clone(),
        ext: ext.clone(),
        base_atom,
    };
    let mut b1 = Vec::with_capacity(pattern.theta);
    for alpha in 0..pattern.theta {
        let mut e = ext.zero();
        for (i, &m) in masks.iter().enumerate() {
            if m >> alpha & 1 == 1 {
                e.bits[i / 64] |= 1 << (i % 64);
            }
        }
        b1.push(e);
    }
    Ok(FreeExtension {
        extension,
        pattern: pattern.clone(),
        masks,
        solution: Solution {
            theta: pattern.theta,
            b1,
        },
    })
}

/// Outcome of the three-part extension check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ext1Report {
    pub homomorphism_ok: bool,
    pub antichains_checked: usize,
    pub antichains_ok: bool,
    pub solution_ok: bool,
    pub solution_witness: Option<u16>,
    pub fip_ok: bool,
}

impl Ext1Report {
    pub fn pass(&self) -> bool {
        self.homomorphism_ok && self.antichains_ok && self.solution_ok && self.fip_ok
    }
}

fn for_each_partition(n: usize, limit: usize, mut visit: impl FnMut(&[usize])) {
    // restricted growth strings, enumerated lexicographically
    let mut rgs = vec![0usize; n];
    let mut seen = 0;
    loop {
        visit(&rgs);
        seen += 1;
        if seen >= limit {
            return;
        }
        // advance
        let mut i = n;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            let max_prev = rgs[..i].iter().copied().max().map_or(0, |m| m + 1);
            if rgs[i] < max_prev {
                rgs[i] += 1;
                for r in rgs[i + 1..].iter_mut() {
                    *r = 0;
                }
                break;
            }
        }
    }
}

/// Verify a free extension: the embedding is a Boolean homomorphism, base
/// maximal antichains stay maximal (enumerated up to `antichain_budget`
/// set partitions of the base atoms), the solution is multiplicatively
/// below the pattern, and the filter seed together with the solution
/// members has the finite intersection property.
pub fn check_ext1(
    ext: &FreeExtension,
    solution: &Solution,
    filter_seed: &[Element],
    antichain_budget: usize,
) -> Result<Ext1Report> {
    let base = &ext.extension.base;
    let bb = &ext.extension.ext;

    // (a) homomorphism: embedded atoms are disjoint, cover the unit, and
    // complements commute with the embedding
    let mut homomorphism_ok = true;
    let mut seen = bb.zero();
    for a in 0..base.atom_count {
        let e = ext.extension.embed(&base.atom(a)?)?;
        if !bb.meet(&e, &seen)?.is_zero() {
            homomorphism_ok = false;
        }
        seen = bb.join(&seen, &e)?;
    }
    if seen != bb.one() {
        homomorphism_ok = false;
    }
    for a in 0..base.atom_count.min(8) {
        let x = base.atom(a)?;
        let lhs = ext.extension.embed(&base.complement(&x)?)?;
        let rhs = bb.complement(&ext.extension.embed(&x)?)?;
        if lhs != rhs {
            homomorphism_ok = false;
        }
    }

    // (b) maximal antichains survive
    let mut antichains_checked = 0;
    let mut antichains_ok = true;
    for_each_partition(base.atom_count, antichain_budget, |rgs| {
        let parts = rgs.iter().copied().max().unwrap_or(0) + 1;
        let mut blocks = vec![base.zero(); parts];
        for (a, &p) in rgs.iter().enumerate() {
            blocks[p].bits[a / 64] |= 1 << (a % 64);
        }
        let embedded: Vec<Element> = blocks
            .iter()
            .map(|b| ext.extension.embed(b).expect("same universe"))
            .collect();
        if !base.maximal_antichain_check(&blocks).unwrap_or(false)
            || !bb.maximal_antichain_check(&embedded).unwrap_or(false)
        {
            antichains_ok = false;
        }
        antichains_checked += 1;
    });

    // (c) multiplicativity and FIP
    let mut solution_ok = true;
    let mut solution_witness = None;
    for mask in 0..1u32 << ext.pattern.theta {
        let m = solution.meet_over(bb, mask as u16)?;
        let target = ext.extension.embed(&ext.pattern.b[mask as usize])?;
        if !bb.leq(&m, &target)? {
            solution_ok = false;
            solution_witness.get_or_insert(mask as u16);
        }
    }
    let mut total = solution.meet_over(bb, ext.pattern.full_mask())?;
    for s in filter_seed {
        total = bb.meet(&total, &ext.extension.embed(s)?)?;
    }
    Ok(Ext1Report {
        homomorphism_ok,
        antichains_checked,
        antichains_ok,
        solution_ok,
        solution_witness,
        fip_ok: !total.is_zero(),
    })
}

/// A generator-shaped decomposition of an extension element: base part,
/// required subset, and excluded singletons.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NormalForm {
    pub x: Element,
    pub u_mask: u16,
    pub excluded: Vec<u16>,
}

/// Find the simplest generator expression wedged under `element`: scan
/// subsets `u` and excluded singleton sets in ascending size and return
/// the first whose region `b1_u minus the excluded b1`s traps a nonzero
/// part of `element` over some base atoms.
pub fn normal_form(ext: &FreeExtension, element: &Element) -> Result<NormalForm> {
    let bb = &ext.extension.ext;
    bb.check(element)?;
    if element.is_zero() {
        return Err(Error::InvalidQuery("normal form of zero".into()));
    }
    let theta = ext.pattern.theta;
    let full = 1u32 << theta;
    let mut keys: Vec<(u32, u32, u32, u32)> = Vec::new();
    for u in 0..full {
        for excl in 0..full {
            if u & excl != 0 {
                continue;
            }
            keys.push((excl.count_ones(), u.count_ones(), u, excl));
        }
    }
    keys.sort();
    for (_, _, u, excl) in keys {
        let mut region = ext.solution.meet_over(bb, u as u16)?;
        for alpha in 0..theta {
            if excl >> alpha & 1 == 1 {
                region = bb.meet(&region, &bb.complement(&ext.solution.b1[alpha])?)?;
            }
        }
        // base atoms whose whole slice of the region sits inside element
        let mut x = ext.extension.base.zero();
        let mut nonzero = false;
        let mut slice_ok = vec![true; ext.extension.base.atom_count];
        let mut slice_nonzero = vec![false; ext.extension.base.atom_count];
        for (i, &a) in ext.extension.base_atom.iter().enumerate() {
            if region.contains(i) {
                slice_nonzero[a as usize] = true;
                if !element.contains(i) {
                    slice_ok[a as usize] = false;
                }
            }
        }
        for a in 0..ext.extension.base.atom_count {
            if slice_ok[a] && slice_nonzero[a] {
                x.bits[a / 64] |= 1 << (a % 64);
                nonzero = true;
            }
        }
        if nonzero {
            let excluded = (0..theta as u16)
                .filter(|alpha| excl >> alpha & 1 == 1)
                .map(|alpha| 1u16 << alpha)
                .collect();
            return Ok(NormalForm {
                x,
                u_mask: u as u16,
                excluded,
            });
        }
    }
    unreachable!("every nonzero element traps at least its own atoms");
}

/// Is every nonzero base minorant of `a` still meeting `b` upstairs?
/// Decided by scanning base atoms below `a`.
pub fn below_projection(ext: &Extension, a: &Element, b: &Element) -> Result<bool> {
    ext.base.check(a)?;
    ext.ext.check(b)?;
    if a.is_zero() {
        return Err(Error::InvalidQuery("minorant side must be nonzero".into()));
    }
    for atom in a.atoms() {
        let up = ext.embed(&ext.base.atom(atom)?)?;
        if ext.ext.meet(&up, b)?.is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Search for a multiplicative refinement inside the pattern's own
/// algebra, whose members all survive against the filter seed.
///
/// At finite scale the joint finite-intersection requirement collapses:
/// a refinement compatible with the seed exists exactly when the full
/// pattern element still meets the seed, and then per-atom maximal index
/// sets give a canonical solution.  The search is therefore complete.
pub fn find_refinement(
    pattern: &PossibilityPattern,
    filter_seed: &[Element],
) -> Result<Option<Solution>> {
    let ba = &pattern.ba;
    if pattern.theta > 5 || ba.atom_count > 4096 {
        return Err(Error::Capacity("refinement search limited to tiny instances".into()));
    }
    let mut seed = ba.one();
    for s in filter_seed {
        seed = ba.meet(&seed, s)?;
    }
    if ba.meet(&seed, &pattern.b[pattern.full_mask() as usize])?.is_zero() {
        return Ok(None);
    }
    // greedy maximal subset per atom keeps every meet below its pattern
    // element; atoms of the full element get the full subset
    let mut b1 = vec![ba.zero(); pattern.theta];
    for atom in 0..ba.atom_count {
        let mut mask = 0u16;
        for alpha in 0..pattern.theta {
            let cand = mask | 1 << alpha;
            if pattern.b[cand as usize].contains(atom) {
                mask = cand;
            }
        }
        for (alpha, e) in b1.iter_mut().enumerate() {
            if mask >> alpha & 1 == 1 {
                e.bits[atom / 64] |= 1 << (atom % 64);
            }
        }
    }
    Ok(Some(Solution {
        theta: pattern.theta,
        b1,
    }))
}

/// Atom-exact verdict on the splitting obstruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObstructionReport {
    pub level: usize,
    pub pinned: usize,
    pub intersection_atoms: usize,
    pub is_zero: bool,
}

/// Pin `pinned` indices of the pattern to distinct successors of a right
/// node and intersect with the pattern element of those indices.  At a
/// verified active level with all successors pinned, no left node can
/// relate to every successor at once, so the intersection is the zero
/// element; lazy levels and small pin counts leave it nonzero.
pub fn obstruction_identity(
    param: &Parameter,
    pattern: &PossibilityPattern,
    nu_prime: &[u16],
    pinned: Option<usize>,
) -> Result<ObstructionReport> {
    let prov = pattern
        .provenance
        .as_ref()
        .ok_or_else(|| Error::InvalidQuery("pattern lacks tree provenance".into()))?;
    let n = nu_prime.len();
    if prov.depth != n + 1 {
        return Err(Error::InvalidQuery(format!(
            "pattern depth {} does not extend a level-{n} node",
            prov.depth
        )));
    }
    for (k, &d) in nu_prime.iter().enumerate() {
        if d as usize >= prov.widths[k] {
            return Err(Error::InvalidQuery(format!("digit out of range at level {k}")));
        }
    }
    let successors = prov.widths[n];
    let pinned = pinned.unwrap_or(successors);
    if pinned == 0 || pinned > successors || pinned > pattern.theta {
        return Err(Error::InvalidQuery(format!(
            "cannot pin {pinned} of {successors} successors with theta {}",
            pattern.theta
        )));
    }
    let _ = param; // provenance is the contract; the parameter names the instance
    let ba = &pattern.ba;
    let mut f = BTreeMap::new();
    for j in 0..pinned {
        for (k, &d) in nu_prime.iter().enumerate() {
            f.insert(j * prov.depth + k, d as usize);
        }
        f.insert(j * prov.depth + n, j);
    }
    let w_mask = ((1u32 << pinned) - 1) as u16;
    let meet = ba.meet(&ba.x_f(&f)?, &pattern.b[w_mask as usize])?;
    Ok(ObstructionReport {
        level: n,
        pinned,
        intersection_atoms: meet.count(),
        is_zero: meet.is_zero(),
    })
}

/// Result of chain-condition extraction: indices whose generators agree
/// on a common heart, so their union is a function and all finite meets
/// are nonzero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CcExtract {
    pub indices: Vec<usize>,
    pub heart: BTreeMap<usize, usize>,
}

/// Extract a coherent subfamily from generators: sunflower the domains,
/// then keep the largest class agreeing on the heart.  The pigeonhole
/// bound size >= ceil(petals / product of heart block counts) holds.
pub fn cc_extract(ba: &FiniteBa, family: &[BTreeMap<usize, usize>]) -> Result<CcExtract> {
    let blocks = ba
        .partitions
        .as_ref()
        .ok_or_else(|| Error::InvalidQuery("algebra has no partition structure".into()))?;
    if family.is_empty() {
        return Ok(CcExtract {
            indices: vec![],
            heart: BTreeMap::new(),
        });
    }
    for f in family {
        for (&p, &b) in f {
            if p >= blocks.len() || b >= blocks[p] {
                return Err(Error::InvalidQuery(format!("bad assignment {p}->{b}")));
            }
        }
    }
    let domains: Vec<BTreeSet<u32>> = family
        .iter()
        .map(|f| f.keys().map(|&p| p as u32).collect())
        .collect();
    let mut flower = None;
    for petals in (1..=family.len()).rev() {
        if let Some(s) = setcomb::sunflower(&domains, petals, setcomb::DEFAULT_SEARCH_BUDGET)? {
            flower = Some(s);
            break;
        }
    }
    let flower = flower.expect("a single member is always a sunflower");
    // group the petal members by their values on the heart
    let mut classes: BTreeMap<Vec<(usize, usize)>, Vec<usize>> = BTreeMap::new();
    for &i in &flower.members {
        let key: Vec<(usize, usize)> = flower
            .core
            .iter()
            .map(|&p| (p as usize, family[i][&(p as usize)]))
            .collect();
        classes.entry(key).or_default().push(i);
    }
    let (key, indices) = classes
        .into_iter()
        .max_by_key(|(key, v)| (v.len(), std::cmp::Reverse(key.clone())))
        .unwrap();
    Ok(CcExtract {
        indices,
        heart: key.into_iter().collect(),
    })
}

/// Per-index collapse data: for each index, a maximal antichain of base
/// elements, each remembering which earlier index it collapses to and
/// which piece of that index's antichain contains it.
#[derive(Clone, Debug)]
pub struct CollapseSystem {
    pub trv: Vec<bool>,
    /// `pieces[alpha]` lists (element, collapse target, piece-of-target).
    pub pieces: Vec<Vec<(Element, usize, usize)>>,
}

/// The collapse extension and its canonical solution.
#[derive(Clone, Debug)]
pub struct RgExtension {
    pub extension: Extension,
    pub system: CollapseSystem,
    /// Pattern element per subset mask, in the base algebra.
    pub b: Vec<Element>,
    /// Piece choice per extension atom (one optional piece per index).
    pub choices: Vec<Vec<Option<usize>>>,
    pub solution: Solution,
}

/// Build the extension solving an equality-constrained problem: the
/// subset elements are determined by collisions (`b_u` meets the
/// inequality elements of every pair with opposite truth values); new
/// generators split each collapse piece, with pairs of generators
/// forbidden exactly when opposite truth values land on the same piece of
/// the same target.  The canonical solution's meets stay below `b_u`.
pub fn rg_extension(
    ba: &FiniteBa,
    eq: &[Vec<Element>],
    trv: &[bool],
) -> Result<RgExtension> {
    let theta = trv.len();
    if theta == 0 || theta > 3 {
        return Err(Error::Capacity("collapse construction limited to theta <= 3".into()));
    }
    if eq.len() != theta || eq.iter().any(|row| row.len() != theta) {
        return Err(Error::InvalidQuery("equality table must be theta x theta".into()));
    }
    // per-atom sanity: equality must be an equivalence relation
    for a in 0..ba.atom_count {
        for i in 0..theta {
            ba.check(&eq[i][i])?;
            if !eq[i][i].contains(a) {
                return Err(Error::InvalidQuery("equality not reflexive".into()));
            }
            for j in 0..theta {
                if eq[i][j].contains(a) != eq[j][i].contains(a) {
                    return Err(Error::InvalidQuery("equality not symmetric".into()));
                }
                for k in 0..theta {
                    if eq[i][j].contains(a) && eq[j][k].contains(a) && !eq[i][k].contains(a) {
                        return Err(Error::InvalidQuery("equality not transitive".into()));
                    }
                }
            }
        }
    }

    // subset elements from collisions
    let mut b = Vec::with_capacity(1 << theta);
    for mask in 0..1u32 << theta {
        let mut e = ba.one();
        for i in 0..theta {
            for j in i + 1..theta {
                if mask >> i & 1 == 1 && mask >> j & 1 == 1 && trv[i] != trv[j] {
                    e = ba.meet(&e, &ba.complement(&eq[i][j])?)?;
                }
            }
        }
        if e.is_zero() {
            return Err(Error::InvalidQuery(format!(
                "problem is degenerate: subset {mask} has zero element"
            )));
        }
        b.push(e);
    }

    // collapse target per atom: the least index with the same value
    let target = |atom: usize, alpha: usize| -> usize {
        (0..=alpha).find(|&beta| eq[alpha][beta].contains(atom)).unwrap()
    };
    let mut pieces: Vec<Vec<(Element, usize, usize)>> = Vec::with_capacity(theta);
    for alpha in 0..theta {
        let mut by_target: BTreeMap<usize, Element> = BTreeMap::new();
        for atom in 0..ba.atom_count {
            let t = target(atom, alpha);
            let e = by_target.entry(t).or_insert_with(|| ba.zero());
            e.bits[atom / 64] |= 1 << (atom % 64);
        }
        pieces.push(
            by_target
                .into_iter()
                .map(|(t, e)| (e, t, usize::MAX))
                .collect(),
        );
    }
    // piece-of-target index: atoms collapsing to `t` at level alpha also
    // collapse to `t` at level `t`, i.e. land in the target's self piece
    for alpha in 0..theta {
        for eps in 0..pieces[alpha].len() {
            let t = pieces[alpha][eps].1;
            let xi = pieces[t].iter().position(|p| p.1 == t).unwrap();
            pieces[alpha][eps].2 = xi;
        }
    }

    // extension atoms: (base atom, at most one piece chosen per index),
    // minus choices where opposite truth values share a target piece
    let mu: Vec<usize> = pieces.iter().map(|p| p.len()).collect();
    let mut base_atom = Vec::new();
    let mut choices = Vec::new();
    let mut stack: Vec<Vec<Option<usize>>> = vec![vec![]];
    while let Some(prefix) = stack.pop() {
        if prefix.len() == theta {
            for atom in 0..ba.atom_count {
                base_atom.push(atom as u32);
                choices.push(prefix.clone());
            }
            continue;
        }
        let alpha = prefix.len();
        for c in (0..=mu[alpha]).rev() {
            let choice = if c == mu[alpha] { None } else { Some(c) };
            let mut ok = true;
            if let Some(eps) = choice {
                let (_, t1, xi1) = pieces[alpha][eps];
                for (a2, &prev) in prefix.iter().enumerate() {
                    if let Some(eps2) = prev {
                        let (_, t2, xi2) = pieces[a2][eps2];
                        if trv[alpha] != trv[a2] && t1 == t2 && xi1 == xi2 {
                            ok = false;
                        }
                    }
                }
            }
            if ok {
                let mut next = prefix.clone();
                next.push(choice);
                stack.push(next);
            }
        }
    }
    if base_atom.len() > ATOM_BUDGET {
        return Err(Error::Capacity("collapse extension exceeds atom budget".into()));
    }
    // canonicalize atom order
    let mut order: Vec<usize> = (0..base_atom.len()).collect();
    order.sort_by_key(|&i| (base_atom[i], choices[i].clone()));
    let base_atom: Vec<u32> = order.iter().map(|&i| base_atom[i]).collect();
    let choices: Vec<Vec<Option<usize>>> = order.iter().map(|&i| choices[i].clone()).collect();

    let ext = FiniteBa::new(base_atom.len())?;
    let extension = Extension {
        base: ba.clone(),
        ext: ext.clone(),
        base_atom,
    };
    // solution members: the piece element meets its generator
    let mut b1 = vec![ext.zero(); theta];
    for (i, (choice, &a)) in choices.iter().zip(&extension.base_atom).enumerate() {
        for alpha in 0..theta {
            if let Some(eps) = choice[alpha] {
                if pieces[alpha][eps].0.contains(a as usize) {
                    b1[alpha].bits[i / 64] |= 1 << (i % 64);
                }
            }
        }
    }
    Ok(RgExtension {
        extension,
        system: CollapseSystem {
            trv: trv.to_vec(),
            pieces,
        },
        b,
        choices,
        solution: Solution { theta, b1 },
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgReport {
    pub antichains_ok: bool,
    pub inequality_ok: bool,
    pub inequality_witness: Option<u16>,
    pub fip_ok: bool,
}

impl RgReport {
    pub fn pass(&self) -> bool {
        self.antichains_ok && self.inequality_ok && self.fip_ok
    }
}

/// Exhaustive post-check of a collapse extension: piece rows are maximal
/// antichains, every subset meet of the solution sits below its subset
/// element, and the subset elements together with the solution still
/// have a nonzero total meet.
pub fn check_rg(rg: &RgExtension) -> Result<RgReport> {
    let ba = &rg.extension.base;
    let bb = &rg.extension.ext;
    let theta = rg.solution.theta;
    let mut antichains_ok = true;
    for row in &rg.system.pieces {
        let parts: Vec<Element> = row.iter().map(|(e, _, _)| e.clone()).collect();
        if !ba.maximal_antichain_check(&parts)? {
            antichains_ok = false;
        }
    }
    let mut inequality_ok = true;
    let mut inequality_witness = None;
    for mask in 0..1u32 << theta {
        let m = rg.solution.meet_over(bb, mask as u16)?;
        let target = rg.extension.embed(&rg.b[mask as usize])?;
        if !bb.leq(&m, &target)? {
            inequality_ok = false;
            inequality_witness.get_or_insert(mask as u16);
        }
    }
    let full = ((1u32 << theta) - 1) as u16;
    let mut total = rg.solution.meet_over(bb, full)?;
    for e in &rg.b {
        total = bb.meet(&total, &rg.extension.embed(e)?)?;
    }
    Ok(RgReport {
        antichains_ok,
        inequality_ok,
        inequality_witness,
        fip_ok: !total.is_zero(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphforge::forge_sequence;
    use crate::numerics::FastProfile;
    use crate::parameter::LevelFunction;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_param(seed: u64) -> Parameter {
        let profile = FastProfile::default_tiny();
        let graphs = forge_sequence(&profile, seed, 2, 128).unwrap();
        Parameter::new(graphs, LevelFunction::from_bit_string("01", 1).unwrap()).unwrap()
    }

    #[test]
    fn lattice_laws_exhaustive_on_small_universe() {
        let ba = FiniteBa::new(4).unwrap();
        let elems: Vec<Element> = (0..16u8)
            .map(|m| {
                ba.from_atoms(&(0..4).filter(|a| m >> a & 1 == 1).collect::<Vec<_>>())
                    .unwrap()
            })
            .collect();
        for x in &elems {
            assert!(ba.meet(x, &ba.complement(x).unwrap()).unwrap().is_zero());
            assert_eq!(ba.join(x, &ba.complement(x).unwrap()).unwrap(), ba.one());
            for y in &elems {
                // De Morgan
                let lhs = ba.complement(&ba.meet(x, y).unwrap()).unwrap();
                let rhs = ba
                    .join(&ba.complement(x).unwrap(), &ba.complement(y).unwrap())
                    .unwrap();
                assert_eq!(lhs, rhs);
                for z in &elems {
                    let d1 = ba.meet(x, &ba.join(y, z).unwrap()).unwrap();
                    let d2 = ba
                        .join(&ba.meet(x, y).unwrap(), &ba.meet(x, z).unwrap())
                        .unwrap();
                    assert_eq!(d1, d2);
                }
            }
        }
    }

    #[test]
    fn cross_universe_operand_is_rejected() {
        let ba = FiniteBa::new(4).unwrap();
        let other = FiniteBa::new(4).unwrap();
        assert!(matches!(
            ba.meet(&ba.one(), &other.one()),
            Err(Error::UniverseMismatch(_))
        ));
    }

    #[test]
    fn partition_independence() {
        let ba = FiniteBa::with_partitions(vec![3, 3, 3]).unwrap();
        // blocks of one partition form a maximal antichain
        let blocks: Vec<Element> = (0..3)
            .map(|b| ba.x_f(&BTreeMap::from([(1, b)])).unwrap())
            .collect();
        assert!(ba.maximal_antichain_check(&blocks).unwrap());
        // blocks of distinct partitions meet in exactly 3^(3-2) atoms
        let x = ba.x_f(&BTreeMap::from([(0, 1)])).unwrap();
        let y = ba.x_f(&BTreeMap::from([(2, 2)])).unwrap();
        assert_eq!(ba.meet(&x, &y).unwrap().count(), 3);
        // every total function is nonzero
        let f = BTreeMap::from([(0, 0), (1, 2), (2, 1)]);
        assert_eq!(ba.x_f(&f).unwrap().count(), 1);
        // extending the function shrinks the element
        let g = BTreeMap::from([(0, 0)]);
        assert!(ba.leq(&ba.x_f(&f).unwrap(), &ba.x_f(&g).unwrap()).unwrap());
        assert_eq!(ba.x_f(&BTreeMap::new()).unwrap(), ba.one());
    }

    #[test]
    fn pattern_from_parameter_basics() {
        let param = tiny_param(5);
        // depth 0: single empty right node relates to the empty left node
        let p0 = pattern_from_parameter(&param, 0, 2).unwrap();
        for mask in 0..4 {
            assert_eq!(p0.b[mask], p0.ba.one());
        }
        let p = pattern_from_parameter(&param, 2, 2).unwrap();
        assert_eq!(p.ba.atom_count, 144);
        assert_eq!(p.b[0], p.ba.one());
        assert_eq!(p.b[1], p.ba.one(), "singletons are everywhere possible");
        assert_eq!(p.b[2], p.ba.one());
        // pairs always find a common neighbor (covering threshold is 3),
        // so even the pair element stays full at this scale
        assert_eq!(p.b[3], p.ba.one());
        // four indices can pin all four successors of a level-1 node, and
        // no vertex is adjacent to everything, so the full element shrinks
        let p4 = pattern_from_parameter(&param, 2, 4).unwrap();
        assert!(p4.b[15].count() < p4.ba.atom_count);
    }

    #[test]
    fn lazy_window_pattern_is_trivial() {
        // depth 1 sees only the lazy level, whose complete graph makes
        // every tuple jointly possible
        let param = tiny_param(5);
        let p = pattern_from_parameter(&param, 1, 3).unwrap();
        for mask in 0..8 {
            assert_eq!(p.b[mask], p.ba.one());
        }
    }

    #[test]
    fn pattern_agrees_with_node_enumeration_oracle() {
        let param = tiny_param(11);
        let theta = 2;
        let depth = 2;
        let p = pattern_from_parameter(&param, depth, theta).unwrap();
        let rights = param.right_nodes(depth);
        let lefts = param.left_nodes(depth);
        for atom in 0..p.ba.atom_count {
            // decode the atom the slow way from partition digits
            let node_for = |alpha: usize| -> Vec<u16> {
                (0..depth)
                    .map(|k| p.ba.atom_digit(atom, alpha * depth + k).unwrap() as u16)
                    .collect()
            };
            for mask in 0..1u32 << theta {
                let expect = lefts.iter().any(|l| {
                    (0..theta).all(|alpha| {
                        mask >> alpha & 1 == 0
                            || param.r_edge(l, &node_for(alpha)).unwrap()
                    })
                });
                assert_eq!(p.b[mask as usize].contains(atom), expect);
            }
        }
        assert_eq!(rights.len(), 12);
    }

    #[test]
    fn free_extension_atom_counts() {
        // 4 atoms, theta 2, singleton elements full, pair element size 2
        let ba = FiniteBa::new(4).unwrap();
        let pair = ba.from_atoms(&[0, 3]).unwrap();
        let pattern =
            PossibilityPattern::new(ba.clone(), 2, vec![ba.one(), ba.one(), ba.one(), pair])
                .unwrap();
        let ext = free_extension(&pattern).unwrap();
        assert_eq!(ext.extension.ext.atom_count, 4 + 4 + 4 + 2);
        let report = check_ext1(&ext, &ext.solution, &[], 200).unwrap();
        assert!(report.pass(), "{report:?}");
    }

    #[test]
    fn trivial_extension_shapes() {
        let ba = FiniteBa::new(3).unwrap();
        // theta = 0 leaves the algebra unchanged
        let p0 = PossibilityPattern::new(ba.clone(), 0, vec![ba.one()]).unwrap();
        let e0 = free_extension(&p0).unwrap();
        assert_eq!(e0.extension.ext.atom_count, 3);
        // unconstrained pattern multiplies by 2^theta
        let p2 = PossibilityPattern::new(
            ba.clone(),
            2,
            vec![ba.one(), ba.one(), ba.one(), ba.one()],
        )
        .unwrap();
        let e2 = free_extension(&p2).unwrap();
        assert_eq!(e2.extension.ext.atom_count, 3 * 4);
    }

    #[test]
    fn corrupted_solution_and_bad_seed_fail() {
        let ba = FiniteBa::new(4).unwrap();
        let pair = ba.from_atoms(&[0, 1]).unwrap();
        let pattern =
            PossibilityPattern::new(ba.clone(), 2, vec![ba.one(), ba.one(), ba.one(), pair.clone()])
                .unwrap();
        let ext = free_extension(&pattern).unwrap();
        // corrupt: claim both generators are everything
        let bad = Solution {
            theta: 2,
            b1: vec![ext.extension.ext.one(), ext.extension.ext.one()],
        };
        let report = check_ext1(&ext, &bad, &[], 50).unwrap();
        assert!(!report.solution_ok);
        assert_eq!(report.solution_witness, Some(3));
        // seeding with the complement of a pattern element kills FIP
        let neg = ba.complement(&pair).unwrap();
        let report = check_ext1(&ext, &ext.solution, &[neg], 50).unwrap();
        assert!(!report.fip_ok);
        assert!(report.solution_ok);
    }

    fn random_pattern(rng: &mut ChaCha8Rng, atoms: usize, theta: usize) -> PossibilityPattern {
        let ba = FiniteBa::new(atoms).unwrap();
        let full_mask = (1usize << theta) - 1;
        let mut b = vec![ba.zero(); 1 << theta];
        b[full_mask] = ba.atom(rng.gen_range(0..atoms)).unwrap();
        let mut masks: Vec<usize> = (0..1 << theta).collect();
        masks.sort_by_key(|m: &usize| std::cmp::Reverse(m.count_ones()));
        for &m in &masks {
            if m == full_mask {
                continue;
            }
            let mut e = ba.zero();
            for sup in 0..=full_mask {
                if sup & m == m && sup != m {
                    e = ba.join(&e, &b[sup]).unwrap();
                }
            }
            for a in 0..atoms {
                if rng.gen_bool(0.5) {
                    e.bits[a / 64] |= 1 << (a % 64);
                }
            }
            b[m] = e;
        }
        b[0] = ba.one();
        PossibilityPattern::new(ba, theta, b).unwrap()
    }

    #[test]
    fn random_free_extensions_pass_all_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let theta = rng.gen_range(1..=3);
            let atoms = rng.gen_range(2..=16);
            let pattern = random_pattern(&mut rng, atoms, theta);
            let ext = free_extension(&pattern).unwrap();
            // atom count is the sum of the pattern element sizes
            let expect: usize = pattern.b.iter().map(|e| e.count()).sum();
            assert_eq!(ext.extension.ext.atom_count, expect);
            let seed: Vec<Element> = pattern.b.clone();
            let report = check_ext1(&ext, &ext.solution, &seed, 100).unwrap();
            assert!(report.pass(), "{report:?}");
        }
    }

    #[test]
    fn normal_form_examples() {
        let ba = FiniteBa::new(4).unwrap();
        let pair = ba.from_atoms(&[0, 3]).unwrap();
        let pattern =
            PossibilityPattern::new(ba.clone(), 2, vec![ba.one(), ba.one(), ba.one(), pair])
                .unwrap();
        let ext = free_extension(&pattern).unwrap();
        // a generator comes back as itself
        let nf = normal_form(&ext, &ext.solution.b1[0]).unwrap();
        assert_eq!(nf.u_mask, 1);
        assert_eq!(nf.x, ba.one());
        assert!(nf.excluded.is_empty());
        // an embedded element comes back downstairs
        let x = ba.from_atoms(&[1, 2]).unwrap();
        let nf = normal_form(&ext, &ext.extension.embed(&x).unwrap()).unwrap();
        assert_eq!(nf.u_mask, 0);
        assert_eq!(nf.x, x);
        assert!(nf.excluded.is_empty());
        assert!(matches!(
            normal_form(&ext, &ext.extension.ext.zero()),
            Err(Error::InvalidQuery(_))
        ));
    }

    /// Reference search: same key order, feasibility checked directly on
    /// extension atoms per candidate base atom.
    fn normal_form_oracle(ext: &FreeExtension, element: &Element) -> (u32, u32) {
        let bb = &ext.extension.ext;
        let theta = ext.pattern.theta;
        let mut keys: Vec<(u32, u32, u32, u32)> = Vec::new();
        for u in 0..1u32 << theta {
            for excl in 0..1u32 << theta {
                if u & excl == 0 {
                    keys.push((excl.count_ones(), u.count_ones(), u, excl));
                }
            }
        }
        keys.sort();
        for (ec, uc, u, excl) in keys {
            for a in 0..ext.extension.base.atom_count {
                let mut hit = false;
                let mut ok = true;
                for i in 0..bb.atom_count {
                    if ext.extension.base_atom[i] as usize != a {
                        continue;
                    }
                    let m = ext.masks[i] as u32;
                    if m & u == u && m & excl == 0 {
                        hit = true;
                        if !element.contains(i) {
                            ok = false;
                        }
                    }
                }
                if hit && ok {
                    return (ec, uc);
                }
            }
        }
        unreachable!()
    }

    #[test]
    fn normal_form_matches_minimality_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..25 {
            let atoms = rng.gen_range(2..=6);
            let pattern = random_pattern(&mut rng, atoms, 2);
            let ext = free_extension(&pattern).unwrap();
            let n = ext.extension.ext.atom_count;
            let atoms: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.4)).collect();
            if atoms.is_empty() {
                continue;
            }
            let element = ext.extension.ext.from_atoms(&atoms).unwrap();
            let nf = normal_form(&ext, &element).unwrap();
            // self-check the defining inequality
            let bb = &ext.extension.ext;
            let mut region = ext.solution.meet_over(bb, nf.u_mask).unwrap();
            for e in &nf.excluded {
                let alpha = e.trailing_zeros() as usize;
                region = bb
                    .meet(&region, &bb.complement(&ext.solution.b1[alpha]).unwrap())
                    .unwrap();
            }
            let wedge = bb
                .meet(&ext.extension.embed(&nf.x).unwrap(), &region)
                .unwrap();
            assert!(!wedge.is_zero());
            assert!(bb.leq(&wedge, &element).unwrap());
            assert!(ext
                .extension
                .base
                .leq(&nf.x, &ext.pattern.b[nf.u_mask as usize])
                .unwrap());
            // minimal complexity agrees with the oracle
            let (ec, uc) = normal_form_oracle(&ext, &element);
            assert_eq!(
                (nf.excluded.len() as u32, nf.u_mask.count_ones()),
                (ec, uc)
            );
        }
    }

    #[test]
    fn below_projection_examples() {
        let ba = FiniteBa::new(4).unwrap();
        let pair = ba.from_atoms(&[0, 3]).unwrap();
        let pattern =
            PossibilityPattern::new(ba.clone(), 2, vec![ba.one(), ba.one(), ba.one(), pair])
                .unwrap();
        let ext = free_extension(&pattern).unwrap();
        let a = ba.from_atoms(&[0, 1]).unwrap();
        // embedded comparison: a <= embed(a) trivially
        assert!(below_projection(&ext.extension, &a, &ext.extension.embed(&a).unwrap()).unwrap());
        // disjoint fails
        let other = ext
            .extension
            .embed(&ba.from_atoms(&[2, 3]).unwrap())
            .unwrap();
        assert!(!below_projection(&ext.extension, &a, &other).unwrap());
        // every generator projects over the whole base: each base atom has
        // a slice meeting b1_alpha because singleton elements are the unit
        assert!(below_projection(&ext.extension, &ba.one(), &ext.solution.b1[1]).unwrap());
    }

    #[test]
    fn refinement_trivial_and_blocked() {
        let ba = FiniteBa::new(6).unwrap();
        let p = PossibilityPattern::new(
            ba.clone(),
            2,
            vec![ba.one(), ba.one(), ba.one(), ba.one()],
        )
        .unwrap();
        let sol = find_refinement(&p, &[]).unwrap().unwrap();
        assert_eq!(sol.b1[0], ba.one());
        assert_eq!(sol.b1[1], ba.one());
        // zero full element and a seed demanding joint consistency: none
        let p = PossibilityPattern::new(
            ba.clone(),
            2,
            vec![ba.one(), ba.one(), ba.one(), ba.zero()],
        )
        .unwrap();
        assert!(find_refinement(&p, &[]).unwrap().is_none());
        // seed disjoint from the full element: none
        let full = ba.from_atoms(&[0]).unwrap();
        let p = PossibilityPattern::new(
            ba.clone(),
            2,
            vec![ba.one(), ba.one(), ba.one(), full],
        )
        .unwrap();
        let seed = ba.from_atoms(&[1, 2]).unwrap();
        assert!(find_refinement(&p, &[seed]).unwrap().is_none());
    }

    #[test]
    fn planted_refinements_are_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..40 {
            let theta = rng.gen_range(1..=3usize);
            let atoms = rng.gen_range(2..=12);
            let ba = FiniteBa::new(atoms).unwrap();
            // plant a multiplicative family and close it upward randomly
            let c: Vec<Element> = (0..theta)
                .map(|_| {
                    let mut e = ba.atom(rng.gen_range(0..atoms)).unwrap();
                    e = ba.join(&e, &ba.atom(0).unwrap()).unwrap();
                    e
                })
                .collect();
            let mut b = Vec::new();
            for mask in 0..1u32 << theta {
                let mut e = ba.one();
                for (alpha, ca) in c.iter().enumerate() {
                    if mask >> alpha & 1 == 1 {
                        e = ba.meet(&e, ca).unwrap();
                    }
                }
                b.push(e);
            }
            // grow randomly while preserving monotonicity
            let mut masks: Vec<usize> = (0..1usize << theta).collect();
            masks.sort_by_key(|m| std::cmp::Reverse(m.count_ones()));
            for &m in &masks {
                if m == 0 {
                    continue;
                }
                let mut e = b[m].clone();
                for sup in 0..1usize << theta {
                    if sup & m == m && sup != m {
                        e = ba.join(&e, &b[sup]).unwrap();
                    }
                }
                for a in 0..atoms {
                    if rng.gen_bool(0.2) {
                        e.bits[a / 64] |= 1 << (a % 64);
                    }
                }
                b[m] = e;
            }
            b[0] = ba.one();
            let p = PossibilityPattern::new(ba.clone(), theta, b).unwrap();
            let sol = find_refinement(&p, &[]).unwrap().expect("planted");
            for mask in 0..1u32 << theta {
                let m = sol.meet_over(&ba, mask as u16).unwrap();
                assert!(ba.leq(&m, &p.b[mask as usize]).unwrap());
            }
            for alpha in 0..theta {
                assert!(!sol.b1[alpha].is_zero());
            }
        }
    }

    #[test]
    fn obstruction_identity_on_tiny_profile() {
        let param = tiny_param(5);
        // active level 1: each right node there has 4 successors, and the
        // level graph keeps every degree below 4
        let pattern = pattern_from_parameter(&param, 2, 4).unwrap();
        assert_eq!(pattern.ba.atom_count, 20736);
        for nu in 0..3u16 {
            let report = obstruction_identity(&param, &pattern, &[nu], None).unwrap();
            assert!(report.is_zero, "{report:?}");
            // pinning only up to the small threshold stays consistent
            let report = obstruction_identity(&param, &pattern, &[nu], Some(3)).unwrap();
            assert!(!report.is_zero, "{report:?}");
        }
        // lazy truncation: depth 1 sits over the lazy level 0
        let lazy = pattern_from_parameter(&param, 1, 3).unwrap();
        let report = obstruction_identity(&param, &lazy, &[], Some(3)).unwrap();
        assert!(!report.is_zero);
        // missing provenance is rejected
        let bare = PossibilityPattern::new(
            pattern.ba.clone(),
            4,
            pattern.b.clone(),
        )
        .unwrap();
        assert!(matches!(
            obstruction_identity(&param, &bare, &[0], None),
            Err(Error::InvalidQuery(_))
        ));
    }

    #[test]
    fn cc_extract_disjoint_and_pigeonhole() {
        let ba = FiniteBa::with_partitions(vec![2; 6]).unwrap();
        // pairwise-disjoint domains: everything survives, empty heart
        let family: Vec<BTreeMap<usize, usize>> = (0..3)
            .map(|i| BTreeMap::from([(2 * i, 1), (2 * i + 1, 0)]))
            .collect();
        let out = cc_extract(&ba, &family).unwrap();
        assert_eq!(out.indices, vec![0, 1, 2]);
        assert!(out.heart.is_empty());
        // identical domain, values split: the larger class wins
        let family: Vec<BTreeMap<usize, usize>> = (0..5)
            .map(|i| BTreeMap::from([(0, usize::from(i == 4))]))
            .collect();
        let out = cc_extract(&ba, &family).unwrap();
        assert_eq!(out.indices, vec![0, 1, 2, 3]);
        assert_eq!(out.heart, BTreeMap::from([(0, 0)]));
    }

    #[test]
    fn cc_extract_random_families_stay_compatible() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let ba = FiniteBa::with_partitions(vec![2; 5]).unwrap();
        for _ in 0..20 {
            let family: Vec<BTreeMap<usize, usize>> = (0..20)
                .map(|_| {
                    let k = rng.gen_range(1..=3);
                    let mut f = BTreeMap::new();
                    while f.len() < k {
                        f.insert(rng.gen_range(0..5), rng.gen_range(0..2));
                    }
                    f
                })
                .collect();
            let out = cc_extract(&ba, &family).unwrap();
            assert!(!out.indices.is_empty());
            // union of the surviving generators is a function, so every
            // finite meet is nonzero
            let mut union: BTreeMap<usize, usize> = BTreeMap::new();
            for &i in &out.indices {
                for (&p, &v) in &family[i] {
                    if let Some(&old) = union.get(&p) {
                        assert_eq!(old, v, "incompatible members kept");
                    }
                    union.insert(p, v);
                }
            }
            let mut meet = ba.one();
            for &i in &out.indices {
                meet = ba.meet(&meet, &ba.x_f(&family[i]).unwrap()).unwrap();
            }
            assert!(!meet.is_zero());
        }
    }

    fn labels_to_eq(ba: &FiniteBa, labels: &[Vec<u32>]) -> Vec<Vec<Element>> {
        let theta = labels[0].len();
        (0..theta)
            .map(|i| {
                (0..theta)
                    .map(|j| {
                        let atoms: Vec<usize> = (0..ba.atom_count)
                            .filter(|&a| labels[a][i] == labels[a][j])
                            .collect();
                        ba.from_atoms(&atoms).unwrap()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn rg_extension_all_distinct() {
        // pairwise never-equal elements: single self piece per index
        let ba = FiniteBa::new(4).unwrap();
        let labels: Vec<Vec<u32>> = (0..4).map(|_| vec![0, 1, 2]).collect();
        let eq = labels_to_eq(&ba, &labels);
        let rg = rg_extension(&ba, &eq, &[true, false, true]).unwrap();
        for (alpha, row) in rg.system.pieces.iter().enumerate() {
            assert_eq!(row.len(), 1);
            assert_eq!(row[0].1, alpha, "collapse target is the index itself");
        }
        let report = check_rg(&rg).unwrap();
        assert!(report.pass(), "{report:?}");
    }

    #[test]
    fn rg_extension_all_trv_equal_is_unconstrained() {
        let ba = FiniteBa::new(3).unwrap();
        let labels: Vec<Vec<u32>> = vec![vec![0, 0], vec![0, 1], vec![5, 5]];
        let eq = labels_to_eq(&ba, &labels);
        let rg = rg_extension(&ba, &eq, &[true, true]).unwrap();
        for mask in 0..4 {
            assert_eq!(rg.b[mask], ba.one(), "no collisions matter");
        }
        assert!(check_rg(&rg).unwrap().pass());
    }

    #[test]
    fn rg_extension_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for case in 0..60 {
            let theta = rng.gen_range(1..=3usize);
            let atoms = rng.gen_range(2..=10);
            let ba = FiniteBa::new(atoms).unwrap();
            let mut labels: Vec<Vec<u32>> = (0..atoms)
                .map(|_| (0..theta).map(|_| rng.gen_range(0..2u32)).collect())
                .collect();
            // one atom with pairwise-distinct values keeps every subset
            // element nonzero
            labels[0] = (0..theta as u32).collect();
            let eq = labels_to_eq(&ba, &labels);
            let trv: Vec<bool> = (0..theta).map(|_| rng.gen_bool(0.5)).collect();
            let rg = rg_extension(&ba, &eq, &trv).unwrap();
            let report = check_rg(&rg).unwrap();
            assert!(report.pass(), "case {case}: {report:?}");
        }
    }

    #[test]
    fn rg_rejects_non_equivalence() {
        let ba = FiniteBa::new(2).unwrap();
        let one = ba.one();
        let zero = ba.zero();
        // symmetric failure
        let eq = vec![vec![one.clone(), one.clone()], vec![zero, one.clone()]];
        assert!(matches!(
            rg_extension(&ba, &eq, &[true, false]),
            Err(Error::InvalidQuery(_))
        ));
    }

    #[test]
    fn element_and_pattern_json_round_trip() {
        let ba = FiniteBa::new(10).unwrap();
        let e = ba.from_atoms(&[1, 4, 9]).unwrap();
        let back = ba.from_json(&e.to_json()).unwrap();
        assert_eq!(e, back);
        let pattern = PossibilityPattern::new(
            ba.clone(),
            1,
            vec![ba.one(), ba.from_atoms(&[0, 2]).unwrap()],
        )
        .unwrap();
        let v = pattern.to_json();
        assert_eq!(v["theta"], 1);
        assert_eq!(v["b"]["[0]"], serde_json::json!([0, 2]));
    }
}
