//! Seeded sampling and exhaustive verification of good graph levels.
//!
//! A level is a symmetric graph on `[m_i]` in which self-loops are allowed
//! and count once toward the degree.  Forging a level means sampling edges
//! independently with a rational probability and retrying until both desk
//! checks pass: every small vertex set has a common neighbor, and no vertex
//! reaches the large-degree threshold (equivalently, no large set has a
//! common neighbor).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::FastProfile;
use crate::{Error, Result};

/// Default cap on the number of subsets an exhaustive sweep may visit.
pub const DEFAULT_SUBSET_BUDGET: u64 = 5_000_000;

/// One sampled (or complete) graph level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphLevel {
    pub level: usize,
    pub n: usize,
    pub seed: u64,
    pub p_num: u64,
    pub p_den: u64,
    rows: Vec<Vec<u64>>,
}

fn blocks(n: usize) -> usize {
    (n + 63) / 64
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

impl GraphLevel {
    pub fn empty(level: usize, n: usize) -> GraphLevel {
        GraphLevel {
            level,
            n,
            seed: 0,
            p_num: 1,
            p_den: 1,
            rows: vec![vec![0; blocks(n)]; n],
        }
    }

    /// The complete graph with all self-loops, used for level 0 and for
    /// lazy levels.
    pub fn complete(level: usize, n: usize) -> GraphLevel {
        let mut g = GraphLevel::empty(level, n);
        for a in 0..n {
            for b in 0..n {
                g.set_edge(a, b);
            }
        }
        g
    }

    pub fn set_edge(&mut self, a: usize, b: usize) {
        self.rows[a][b / 64] |= 1 << (b % 64);
        self.rows[b][a / 64] |= 1 << (a % 64);
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.rows[a][b / 64] >> (b % 64) & 1 == 1
    }

    /// Number of distinct neighbors; a self-loop contributes one.
    pub fn degree(&self, v: usize) -> usize {
        self.rows[v].iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Smallest vertex adjacent to every member of `u`, if any.
    pub fn common_neighbor(&self, u: &[usize]) -> Option<usize> {
        let mut acc = vec![u64::MAX; blocks(self.n)];
        if self.n % 64 != 0 {
            *acc.last_mut().unwrap() = (1u64 << (self.n % 64)) - 1;
        }
        for &t in u {
            for (a, r) in acc.iter_mut().zip(self.rows[t].iter()) {
                *a &= r;
            }
        }
        for (i, blk) in acc.iter().enumerate() {
            if *blk != 0 {
                return Some(i * 64 + blk.trailing_zeros() as usize);
            }
        }
        None
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.n {
            for b in a..self.n {
                if self.has_edge(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "version": 1,
            "level": self.level,
            "n": self.n,
            "seed": self.seed,
            "p": {"num": self.p_num, "den": self.p_den},
            "edges": self.edges().iter().map(|&(a, b)| vec![a, b]).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<GraphLevel> {
        let get = |k: &str| -> Result<u64> {
            v.get(k)
                .and_then(|x| x.as_u64())
                .ok_or_else(|| Error::Serialization(format!("missing {k}")))
        };
        if get("version")? != 1 {
            return Err(Error::Serialization("unsupported graph version".into()));
        }
        let n = get("n")? as usize;
        let mut g = GraphLevel::empty(get("level")? as usize, n);
        g.seed = get("seed")?;
        let p = v
            .get("p")
            .ok_or_else(|| Error::Serialization("missing p".into()))?;
        g.p_num = p
            .get("num")
            .and_then(|x| x.as_u64())
            .ok_or_else(|| Error::Serialization("missing p.num".into()))?;
        g.p_den = p
            .get("den")
            .and_then(|x| x.as_u64())
            .ok_or_else(|| Error::Serialization("missing p.den".into()))?;
        let edges = v
            .get("edges")
            .and_then(|x| x.as_array())
            .ok_or_else(|| Error::Serialization("missing edges".into()))?;
        for e in edges {
            let pair = e
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| Error::Serialization("edge must be a pair".into()))?;
            let a = pair[0].as_u64().unwrap_or(u64::MAX) as usize;
            let b = pair[1].as_u64().unwrap_or(u64::MAX) as usize;
            if a >= n || b >= n {
                return Err(Error::Serialization("edge endpoint out of range".into()));
            }
            g.set_edge(a, b);
        }
        Ok(g)
    }
}

/// Deterministic Bernoulli sample of level `i >= 1` of a scaled profile.
pub fn sample_level(profile: &FastProfile, i: usize, seed: u64) -> Result<GraphLevel> {
    if i == 0 {
        return Err(Error::InvalidQuery(
            "level 0 is always the complete graph; use GraphLevel::complete".into(),
        ));
    }
    let l = profile.scaled_level(i)?;
    let n = l.m;
    let mut key = [0u8; 32];
    let mut s = splitmix(seed ^ splitmix(i as u64) ^ splitmix(n as u64));
    for chunk in key.chunks_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    let mut g = GraphLevel::empty(i, n);
    g.seed = seed;
    g.p_num = l.p_num;
    g.p_den = l.p_den;
    for a in 0..n {
        for b in a..n {
            if rng.gen_range(0..l.p_den) < l.p_num {
                g.set_edge(a, b);
            }
        }
    }
    Ok(g)
}

/// Verdict of a covering sweep.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CoverCheck {
    Pass,
    /// A minimum-cardinality vertex set with no common neighbor.
    Fail { witness: Vec<usize> },
}

/// Verdict of a sampled covering sweep: sampling can refute but never prove.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SampledCheck {
    Inconclusive,
    Fail { witness: Vec<usize> },
}

/// Verdict of the large-degree sweep.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DegreeCheck {
    Pass,
    /// `witness` is a set of `large` many vertices sharing `vertex` as a
    /// common neighbor.
    Fail {
        vertex: usize,
        degree: usize,
        witness: Vec<usize>,
    },
}

fn binomial(n: u64, k: u64) -> Option<u64> {
    let mut acc: u64 = 1;
    for j in 0..k.min(n.saturating_sub(k)) {
        acc = acc.checked_mul(n - j)?;
        acc /= j + 1;
    }
    if k > n {
        return Some(0);
    }
    Some(acc)
}

fn for_each_subset(
    n: usize,
    k: usize,
    mut f: impl FnMut(&[usize]) -> bool,
) -> bool {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return true;
    }
    loop {
        if !f(&idx) {
            return false;
        }
        // next combination in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return true;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return true;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exhaustively check that every vertex set of size at most `s` has a
/// common neighbor.  On failure the witness has minimum cardinality.
pub fn verify_small_covered(g: &GraphLevel, s: usize, budget: u64) -> Result<CoverCheck> {
    let s = s.min(g.n);
    let mut total: u64 = 0;
    for k in 1..=s {
        total = total
            .checked_add(binomial(g.n as u64, k as u64).ok_or_else(|| {
                Error::Capacity("subset count overflow".into())
            })?)
            .ok_or_else(|| Error::Capacity("subset count overflow".into()))?;
    }
    if total > budget {
        return Err(Error::Capacity(format!(
            "covering sweep needs {total} subsets, budget is {budget}"
        )));
    }
    for k in 1..=s {
        let mut witness = None;
        for_each_subset(g.n, k, |u| {
            if g.common_neighbor(u).is_none() {
                witness = Some(u.to_vec());
                false
            } else {
                true
            }
        });
        if let Some(w) = witness {
            return Ok(CoverCheck::Fail { witness: w });
        }
    }
    Ok(CoverCheck::Pass)
}

/// Seeded random covering probe for levels too wide to sweep exhaustively.
pub fn verify_small_covered_sampled(
    g: &GraphLevel,
    s: usize,
    samples: u64,
    seed: u64,
) -> SampledCheck {
    let s = s.min(g.n);
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed));
    for _ in 0..samples {
        let k = rng.gen_range(1..=s);
        let mut u: Vec<usize> = Vec::with_capacity(k);
        while u.len() < k {
            let v = rng.gen_range(0..g.n);
            if !u.contains(&v) {
                u.push(v);
            }
        }
        u.sort_unstable();
        if g.common_neighbor(&u).is_none() {
            return SampledCheck::Fail { witness: u };
        }
    }
    SampledCheck::Inconclusive
}

/// Check that no vertex set of size at least `large` has a common neighbor,
/// which holds exactly when every degree stays below `large`.
pub fn verify_large_uncovered(g: &GraphLevel, large: usize) -> DegreeCheck {
    for v in 0..g.n {
        let d = g.degree(v);
        if d >= large {
            let witness: Vec<usize> =
                (0..g.n).filter(|&t| g.has_edge(v, t)).take(large).collect();
            return DegreeCheck::Fail {
                vertex: v,
                degree: d,
                witness,
            };
        }
    }
    DegreeCheck::Pass
}

/// Sample a level repeatedly until it passes both checks.  Trial `t` uses
/// seed `base_seed + t`.  Returns the level and the number of retries used.
pub fn forge_level(
    profile: &FastProfile,
    i: usize,
    base_seed: u64,
    max_retries: usize,
) -> Result<(GraphLevel, usize)> {
    let l = profile.scaled_level(i)?;
    for t in 0..max_retries {
        let g = sample_level(profile, i, base_seed.wrapping_add(t as u64))?;
        if i < profile.i_star {
            return Ok((g, t));
        }
        if verify_small_covered(&g, l.small, DEFAULT_SUBSET_BUDGET)? != CoverCheck::Pass {
            continue;
        }
        if verify_large_uncovered(&g, l.large) != DegreeCheck::Pass {
            continue;
        }
        return Ok((g, t));
    }
    Err(Error::ForgeExhausted {
        level: i,
        retries: max_retries,
    })
}

/// A forged sequence of graph levels for a scaled profile.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoodSequence {
    pub profile: FastProfile,
    pub levels: Vec<GraphLevel>,
    pub retries: Vec<usize>,
}

/// Forge all levels `0..depth`.  Level 0 is always complete; levels below
/// `i_star` are sampled without verification.
pub fn forge_sequence(
    profile: &FastProfile,
    base_seed: u64,
    depth: usize,
    max_retries: usize,
) -> Result<GoodSequence> {
    if depth == 0 || depth > profile.depth() {
        return Err(Error::InvalidQuery(format!(
            "depth {depth} outside profile range 1..={}",
            profile.depth()
        )));
    }
    let mut levels = Vec::new();
    let mut retries = Vec::new();
    levels.push(GraphLevel::complete(0, profile.width(0)?));
    retries.push(0);
    for i in 1..depth {
        let level_seed = splitmix(base_seed ^ splitmix(i as u64));
        let (g, r) = forge_level(profile, i, level_seed, max_retries)?;
        levels.push(g);
        retries.push(r);
    }
    Ok(GoodSequence {
        profile: profile.clone(),
        levels,
        retries,
    })
}

impl GoodSequence {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Re-verify every level at or above `i_star` exhaustively.
    pub fn verify_all(&self, budget: u64) -> Result<Vec<(usize, CoverCheck, DegreeCheck)>> {
        let mut out = Vec::new();
        for (i, g) in self.levels.iter().enumerate() {
            if i < self.profile.i_star {
                continue;
            }
            let l = self.profile.scaled_level(i)?;
            out.push((
                i,
                verify_small_covered(g, l.small, budget)?,
                verify_large_uncovered(g, l.large),
            ));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "version": 1,
            "profile": self.profile.to_json(),
            "levels": self.levels.iter().map(|g| g.to_json()).collect::<Vec<_>>(),
            "retries": self.retries,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<GoodSequence> {
        if v.get("version").and_then(|x| x.as_u64()) != Some(1) {
            return Err(Error::Serialization("unsupported sequence version".into()));
        }
        let profile = FastProfile::from_json(
            v.get("profile")
                .ok_or_else(|| Error::Serialization("missing profile".into()))?,
        )?;
        let levels = v
            .get("levels")
            .and_then(|x| x.as_array())
            .ok_or_else(|| Error::Serialization("missing levels".into()))?
            .iter()
            .map(GraphLevel::from_json)
            .collect::<Result<Vec<_>>>()?;
        let retries = v
            .get("retries")
            .and_then(|x| x.as_array())
            .map(|a| {
                a.iter()
                    .map(|x| x.as_u64().unwrap_or(0) as usize)
                    .collect::<Vec<_>>()
            })
            .unwrap_or_else(|| vec![0; levels.len()]);
        Ok(GoodSequence {
            profile,
            levels,
            retries,
        })
    }
}
