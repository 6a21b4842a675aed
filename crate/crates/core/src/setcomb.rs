//! Set combinatorics at desk scale: sunflower extraction, independent
//! families of level functions, and ideal membership.

use std::collections::BTreeSet;

use crate::parameter::LevelFunction;
use crate::{Error, Result};

pub const DEFAULT_SEARCH_BUDGET: u64 = 2_000_000;

/// A sunflower inside an indexed family: the pairwise intersection of any
/// two chosen members equals the core.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sunflower {
    pub core: BTreeSet<u32>,
    pub members: Vec<usize>,
}

/// Check the sunflower condition for chosen indices.
pub fn is_sunflower(family: &[BTreeSet<u32>], members: &[usize]) -> Option<BTreeSet<u32>> {
    if members.len() < 2 {
        return members.first().map(|&i| family[i].clone());
    }
    let core: BTreeSet<u32> = family[members[0]]
        .intersection(&family[members[1]])
        .copied()
        .collect();
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            let inter: BTreeSet<u32> =
                family[i].intersection(&family[j]).copied().collect();
            if inter != core {
                return None;
            }
        }
    }
    Some(core)
}

fn pack_exhaustive(
    candidates: &[usize],
    petals: &[BTreeSet<u32>],
    chosen: &mut Vec<usize>,
    used: &mut BTreeSet<u32>,
    want: usize,
    from: usize,
    budget: &mut u64,
) -> bool {
    if chosen.len() >= want {
        return true;
    }
    if chosen.len() + (candidates.len() - from) < want {
        return false;
    }
    for c in from..candidates.len() {
        if *budget == 0 {
            return false;
        }
        *budget -= 1;
        if petals[c].iter().any(|e| used.contains(e)) {
            continue;
        }
        chosen.push(candidates[c]);
        used.extend(petals[c].iter().copied());
        if pack_exhaustive(candidates, petals, chosen, used, want, c + 1, budget) {
            return true;
        }
        chosen.pop();
        for e in &petals[c] {
            used.remove(e);
        }
    }
    false
}

/// Find a sunflower with at least `petals` members.
///
/// For each candidate core (every pairwise intersection, every member and
/// the empty set), candidates are the members containing the core whose
/// leftover petals must be packed disjointly: greedily first, then by
/// exhaustive backtracking under the budget.  At desk sizes the search is
/// complete, so `None` means no such sunflower exists.
pub fn sunflower(
    family: &[BTreeSet<u32>],
    petals: usize,
    budget: u64,
) -> Result<Option<Sunflower>> {
    if petals == 0 {
        return Err(Error::InvalidQuery("need at least one petal".into()));
    }
    if petals == 1 {
        return Ok(family.first().map(|s| Sunflower {
            core: s.clone(),
            members: vec![0],
        }));
    }
    let mut cores: Vec<BTreeSet<u32>> = vec![BTreeSet::new()];
    for (a, s) in family.iter().enumerate() {
        if !cores.contains(s) {
            cores.push(s.clone());
        }
        for t in &family[a + 1..] {
            let inter: BTreeSet<u32> = s.intersection(t).copied().collect();
            if !cores.contains(&inter) {
                cores.push(inter);
            }
        }
    }
    let mut budget_left = budget;
    for core in &cores {
        let candidates: Vec<usize> = (0..family.len())
            .filter(|&i| core.is_subset(&family[i]))
            .collect();
        if candidates.len() < petals {
            continue;
        }
        let leftovers: Vec<BTreeSet<u32>> = candidates
            .iter()
            .map(|&i| family[i].difference(core).copied().collect())
            .collect();
        // greedy pass in index order
        let mut chosen = Vec::new();
        let mut used: BTreeSet<u32> = BTreeSet::new();
        for (c, left) in leftovers.iter().enumerate() {
            if left.iter().all(|e| !used.contains(e)) {
                chosen.push(candidates[c]);
                used.extend(left.iter().copied());
            }
        }
        if chosen.len() >= petals {
            chosen.truncate(petals);
            debug_assert!(is_sunflower(family, &chosen).is_some());
            return Ok(Some(Sunflower {
                core: core.clone(),
                members: chosen,
            }));
        }
        // exhaustive fallback
        let mut chosen = Vec::new();
        let mut used = BTreeSet::new();
        if pack_exhaustive(
            &candidates,
            &leftovers,
            &mut chosen,
            &mut used,
            petals,
            0,
            &mut budget_left,
        ) {
            return Ok(Some(Sunflower {
                core: core.clone(),
                members: chosen,
            }));
        }
        if budget_left == 0 {
            return Err(Error::Capacity("sunflower search budget exhausted".into()));
        }
    }
    Ok(None)
}

/// A family of level functions over a shared window, one per index below
/// `k`, in which every activity pattern occurs equally often.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelFunctionFamily {
    pub k: usize,
    pub i_star: usize,
    pub t: usize,
    /// `bits[alpha][n]` for the full window `0..i_star + t * 2^k`.
    pub bits: Vec<Vec<bool>>,
}

/// Build the canonical independent family: below `i_star` everything is
/// inactive; the window then cycles `t` times through all `2^k` subset
/// patterns, so each pattern occurs exactly `t` times.
pub fn independent_family(k: usize, i_star: usize, t: usize) -> Result<LevelFunctionFamily> {
    if k == 0 || k > 16 {
        return Err(Error::InvalidQuery("need 1 <= k <= 16".into()));
    }
    if t == 0 {
        return Err(Error::InvalidQuery("need t >= 1".into()));
    }
    let span = t
        .checked_mul(1usize << k)
        .ok_or_else(|| Error::Capacity("window too long".into()))?;
    let len = i_star + span;
    if len > 1 << 20 {
        return Err(Error::Capacity("window too long".into()));
    }
    let mut bits = vec![vec![false; len]; k];
    for n in i_star..len {
        let pattern = (n - i_star) % (1 << k);
        for (alpha, row) in bits.iter_mut().enumerate() {
            row[n] = pattern >> alpha & 1 == 1;
        }
    }
    Ok(LevelFunctionFamily { k, i_star, t, bits })
}

impl LevelFunctionFamily {
    pub fn window_len(&self) -> usize {
        self.bits[0].len()
    }

    /// The member for one index, usable directly as a parameter's level
    /// function.
    pub fn level_function(&self, alpha: usize) -> Result<LevelFunction> {
        if alpha >= self.k {
            return Err(Error::InvalidQuery(format!("no member {alpha}")));
        }
        LevelFunction::new(self.bits[alpha].clone(), self.i_star)
    }

    /// Number of window positions where `beta` is active and every member
    /// of `u` is inactive.
    pub fn witness_count(&self, beta: usize, u: &[usize]) -> Result<usize> {
        if beta >= self.k || u.iter().any(|&a| a >= self.k) {
            return Err(Error::InvalidQuery("index out of range".into()));
        }
        if u.contains(&beta) {
            return Err(Error::InvalidQuery(
                "witness index must avoid the excluded set".into(),
            ));
        }
        Ok((0..self.window_len())
            .filter(|&n| self.bits[beta][n] && u.iter().all(|&a| !self.bits[a][n]))
            .count())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "version": 1,
            "k": self.k,
            "i_star": self.i_star,
            "t": self.t,
            "bits": self.bits.iter()
                .map(|row| row.iter().map(|&b| if b {1} else {0}).collect::<Vec<u8>>())
                .collect::<Vec<_>>(),
        })
    }
}

/// Membership query for the ideal generated by finitely many sets inside a
/// quotient that ignores up to `budget` exceptional points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdealQuery {
    pub v: BTreeSet<u32>,
    pub generators: Vec<BTreeSet<u32>>,
    /// How many points of `v` may escape the generators.
    pub budget: usize,
}

/// Does `v` lie in the ideal, i.e. is `v` covered by the union of the
/// generators up to at most `budget` exceptions?
pub fn ideal_contains(q: &IdealQuery) -> bool {
    let escaped = q
        .v
        .iter()
        .filter(|e| !q.generators.iter().any(|g| g.contains(e)))
        .count();
    escaped <= q.budget
}
