//! Consistency of type queries over a level relation.
//!
//! A query names a left base node, a target depth and a set of right
//! parameter nodes at that depth.  It is consistent when some extension of
//! the base down to the target depth is related to every parameter.  The
//! greedy mode extends level by level through successor witnesses; the
//! exhaustive mode backtracks.  Over digit-product parameters the two
//! agree (feasibility at a level does not depend on earlier choices), but
//! the fixture trees have irregular relation tables where backtracking is
//! genuinely needed.

use crate::parameter::{LevelRelation, Parameter, Side};
use crate::{Error, Result};

pub const DEFAULT_TYPE_BUDGET: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeQuery {
    /// Left node whose type is extended.
    pub base: Vec<u16>,
    /// Right nodes at `depth` that must all stay related.
    pub params: Vec<Vec<u16>>,
    /// Right nodes at `depth` that should end up unrelated; these are only
    /// discharged when the found witness refutes them.
    pub neg_params: Vec<Vec<u16>>,
    pub depth: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchMode {
    Greedy,
    Exhaustive,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TypeVerdict {
    Consistent {
        /// Leftmost witness: the found extension of the base.
        witness: Vec<u16>,
        /// Indices of negative parameters refuted by the witness.
        neg_discharged: Vec<usize>,
        /// Indices of negative parameters the witness does not refute;
        /// these are model-level constraints, not decided here.
        neg_model_level: Vec<usize>,
    },
    Inconsistent {
        /// First level at which no extension survives.
        level: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeOutcome {
    pub verdict: TypeVerdict,
    pub visited: u64,
    pub mode: SearchMode,
}

impl TypeQuery {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "version": 1,
            "base": self.base,
            "params": self.params,
            "neg_params": self.neg_params,
            "depth": self.depth,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<TypeQuery> {
        let digits = |x: &serde_json::Value| -> Result<Vec<u16>> {
            x.as_array()
                .ok_or_else(|| Error::Serialization("expected digit array".into()))?
                .iter()
                .map(|d| {
                    d.as_u64()
                        .filter(|&d| d <= u16::MAX as u64)
                        .map(|d| d as u16)
                        .ok_or_else(|| Error::Serialization("bad digit".into()))
                })
                .collect()
        };
        let list = |k: &str| -> Result<Vec<Vec<u16>>> {
            match v.get(k) {
                None => Ok(Vec::new()),
                Some(x) => x
                    .as_array()
                    .ok_or_else(|| Error::Serialization(format!("{k} must be a list")))?
                    .iter()
                    .map(digits)
                    .collect(),
            }
        };
        Ok(TypeQuery {
            base: digits(
                v.get("base")
                    .ok_or_else(|| Error::Serialization("missing base".into()))?,
            )?,
            params: list("params")?,
            neg_params: list("neg_params")?,
            depth: v
                .get("depth")
                .and_then(|x| x.as_u64())
                .ok_or_else(|| Error::Serialization("missing depth".into()))?
                as usize,
        })
    }
}

fn check_membership<R: LevelRelation + ?Sized>(
    rel: &R,
    side: Side,
    node: &[u16],
) -> Result<()> {
    for k in 0..node.len() {
        if !rel.children(side, &node[..k]).contains(&node[k]) {
            return Err(Error::InvalidQuery(format!(
                "node {node:?} leaves the {side:?} tree at level {k}"
            )));
        }
    }
    Ok(())
}

fn validate<R: LevelRelation + ?Sized>(rel: &R, q: &TypeQuery) -> Result<()> {
    if q.depth > rel.depth() {
        return Err(Error::InvalidQuery(format!(
            "query depth {} beyond relation depth {}",
            q.depth,
            rel.depth()
        )));
    }
    if q.base.len() > q.depth {
        return Err(Error::InvalidQuery(
            "base node sits below the query depth".into(),
        ));
    }
    check_membership(rel, Side::Left, &q.base)?;
    for p in q.params.iter().chain(q.neg_params.iter()) {
        if p.len() != q.depth {
            return Err(Error::InvalidQuery(
                "parameters must sit at the query depth".into(),
            ));
        }
        check_membership(rel, Side::Right, p)?;
    }
    Ok(())
}

/// Decide a type query.  Returns the leftmost witness (smallest digits
/// first) when consistent.
pub fn decide_type<R: LevelRelation + ?Sized>(
    rel: &R,
    q: &TypeQuery,
    mode: SearchMode,
    budget: u64,
) -> Result<TypeOutcome> {
    validate(rel, q)?;
    let n = q.base.len();
    let mut visited: u64 = 0;
    // the base prefix itself must already be related to every parameter
    for k in 0..=n {
        for a in &q.params {
            visited += 1;
            if !rel.related(&q.base[..k], &a[..k])? {
                return Ok(TypeOutcome {
                    verdict: TypeVerdict::Inconsistent { level: k },
                    visited,
                    mode,
                });
            }
        }
    }

    let mut cur = q.base.clone();
    let mut deepest = n;
    let found = dfs(rel, q, &mut cur, &mut deepest, &mut visited, mode, budget)?;
    match found {
        Some(witness) => {
            let mut neg_discharged = Vec::new();
            let mut neg_model_level = Vec::new();
            for (i, b) in q.neg_params.iter().enumerate() {
                if rel.related(&witness, b)? {
                    neg_model_level.push(i);
                } else {
                    neg_discharged.push(i);
                }
            }
            Ok(TypeOutcome {
                verdict: TypeVerdict::Consistent {
                    witness,
                    neg_discharged,
                    neg_model_level,
                },
                visited,
                mode,
            })
        }
        None => Ok(TypeOutcome {
            verdict: TypeVerdict::Inconsistent { level: deepest + 1 },
            visited,
            mode,
        }),
    }
}

fn dfs<R: LevelRelation + ?Sized>(
    rel: &R,
    q: &TypeQuery,
    cur: &mut Vec<u16>,
    deepest: &mut usize,
    visited: &mut u64,
    mode: SearchMode,
    budget: u64,
) -> Result<Option<Vec<u16>>> {
    if cur.len() == q.depth {
        return Ok(Some(cur.clone()));
    }
    let k = cur.len();
    for d in rel.children(Side::Left, cur) {
        *visited += 1;
        if *visited > budget {
            return Err(Error::Capacity(format!(
                "type search exceeded budget {budget}"
            )));
        }
        cur.push(d);
        let mut ok = true;
        for a in &q.params {
            if !rel.related(cur, &a[..k + 1])? {
                ok = false;
                break;
            }
        }
        if ok {
            if cur.len() > *deepest {
                *deepest = cur.len();
            }
            let r = dfs(rel, q, cur, deepest, visited, mode, budget)?;
            if r.is_some() {
                return Ok(r);
            }
            if mode == SearchMode::Greedy {
                cur.pop();
                return Ok(None);
            }
        }
        cur.pop();
    }
    Ok(None)
}

/// Brute-force reference: grow the full frontier of surviving extensions
/// level by level.  Independent of the backtracking search.
pub fn decide_type_oracle<R: LevelRelation + ?Sized>(
    rel: &R,
    q: &TypeQuery,
    budget: u64,
) -> Result<TypeVerdict> {
    validate(rel, q)?;
    let n = q.base.len();
    for k in 0..=n {
        for a in &q.params {
            if !rel.related(&q.base[..k], &a[..k])? {
                return Ok(TypeVerdict::Inconsistent { level: k });
            }
        }
    }
    let mut frontier = vec![q.base.clone()];
    for k in n..q.depth {
        let mut next = Vec::new();
        for node in &frontier {
            for d in rel.children(Side::Left, node) {
                let mut ext = node.clone();
                ext.push(d);
                let mut ok = true;
                for a in &q.params {
                    if !rel.related(&ext, &a[..k + 1])? {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    next.push(ext);
                }
                if next.len() as u64 > budget {
                    return Err(Error::Capacity("oracle frontier exceeded budget".into()));
                }
            }
        }
        if next.is_empty() {
            return Ok(TypeVerdict::Inconsistent { level: k + 1 });
        }
        frontier = next;
    }
    let witness = frontier.into_iter().min().unwrap();
    let mut neg_discharged = Vec::new();
    let mut neg_model_level = Vec::new();
    for (i, b) in q.neg_params.iter().enumerate() {
        if rel.related(&witness, b)? {
            neg_model_level.push(i);
        } else {
            neg_discharged.push(i);
        }
    }
    Ok(TypeVerdict::Consistent {
        witness,
        neg_discharged,
        neg_model_level,
    })
}

/// Level-by-level relation partners of a left prefix.
pub fn s_rho<R: LevelRelation + ?Sized>(
    rel: &R,
    prefix: &[u16],
) -> Result<Vec<Vec<Vec<u16>>>> {
    check_membership(rel, Side::Left, prefix)?;
    let mut out = Vec::new();
    for k in 0..=prefix.len() {
        let mut level = Vec::new();
        for nu in rel.right_nodes(k) {
            if rel.related(&prefix[..k], &nu)? {
                level.push(nu);
            }
        }
        out.push(level);
    }
    Ok(out)
}

/// Build the canonical obstruction query at an active level: all successors
/// of a right node must be matched at once, which no left successor can do
/// when no vertex of the level graph is adjacent to everything.
pub fn obstruction_instance(param: &Parameter, n: usize, nu_prime: &[u16]) -> Result<TypeQuery> {
    if nu_prime.len() != n {
        return Err(Error::InvalidQuery(
            "obstruction node must sit at the named level".into(),
        ));
    }
    if n + 1 > param.depth() {
        return Err(Error::InvalidQuery(format!(
            "level {} beyond forged depth {}",
            n + 1,
            param.depth()
        )));
    }
    if !param.xi.active(n) {
        return Err(Error::InvalidQuery(format!(
            "level {n} is lazy; the obstruction needs an active graph"
        )));
    }
    check_membership(param, Side::Right, nu_prime)?;
    let base = param
        .left_nodes(n)
        .into_iter()
        .find(|l| param.r_edge(l, nu_prime).unwrap_or(false))
        .ok_or_else(|| {
            Error::InvalidQuery("no left node is related to the obstruction node".into())
        })?;
    let params = param
        .children(Side::Right, nu_prime)
        .into_iter()
        .map(|d| {
            let mut s = nu_prime.to_vec();
            s.push(d);
            s
        })
        .collect();
    Ok(TypeQuery {
        base,
        params,
        neg_params: Vec::new(),
        depth: n + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphforge::forge_sequence;
    use crate::numerics::FastProfile;
    use crate::parameter::{load_warmup, LevelFunction, Parameter};

    fn desk_param(seed: u64) -> Parameter {
        let profile = FastProfile::default_desk();
        let graphs = forge_sequence(&profile, seed, 4, 128).unwrap();
        Parameter::new(graphs, LevelFunction::from_bit_string("0101", 1).unwrap()).unwrap()
    }

    #[test]
    fn warmup_s_rho() {
        let w = load_warmup();
        let s = s_rho(&w, &[0, 1]).unwrap();
        assert_eq!(s[0], vec![Vec::<u16>::new()]);
        assert_eq!(s[1], vec![vec![0], vec![1]]);
        assert_eq!(
            s[2],
            vec![vec![0, 1], vec![0, 2], vec![1, 2], vec![1, 3]]
        );
        let s = s_rho(&w, &[1, 0]).unwrap();
        assert_eq!(s[2], vec![vec![2, 0]]);
    }

    /// A two-level relation with a trap: left branch 0 is related at level
    /// 1 but has no surviving child, so only backtracking reaches 1,0.
    struct TrapRel;

    impl LevelRelation for TrapRel {
        fn depth(&self) -> usize {
            2
        }
        fn left_nodes(&self, k: usize) -> Vec<Vec<u16>> {
            match k {
                0 => vec![vec![]],
                1 => vec![vec![0], vec![1]],
                _ => vec![vec![0, 0], vec![1, 0]],
            }
        }
        fn right_nodes(&self, k: usize) -> Vec<Vec<u16>> {
            vec![vec![0; k]]
        }
        fn children(&self, side: Side, prefix: &[u16]) -> Vec<u16> {
            match (side, prefix.len()) {
                (Side::Left, 0) => vec![0, 1],
                (Side::Left, 1) => vec![0],
                (Side::Right, 0) | (Side::Right, 1) => vec![0],
                _ => vec![],
            }
        }
        fn related(&self, left: &[u16], right: &[u16]) -> Result<bool> {
            Ok(match left.len() {
                0 => true,
                1 => right == [0],
                _ => left == [1, 0] && right == [0, 0],
            })
        }
    }

    #[test]
    fn exhaustive_backtracks_where_greedy_dies() {
        let q = TypeQuery {
            base: vec![],
            params: vec![vec![0, 0]],
            neg_params: vec![],
            depth: 2,
        };
        let out = decide_type(&TrapRel, &q, SearchMode::Exhaustive, 10_000).unwrap();
        match &out.verdict {
            TypeVerdict::Consistent { witness, .. } => assert_eq!(witness, &vec![1, 0]),
            v => panic!("expected consistent, got {v:?}"),
        }
        let out = decide_type(&TrapRel, &q, SearchMode::Greedy, 10_000).unwrap();
        assert!(matches!(out.verdict, TypeVerdict::Inconsistent { .. }));
        let oracle = decide_type_oracle(&TrapRel, &q, 10_000).unwrap();
        assert!(matches!(oracle, TypeVerdict::Consistent { .. }));
    }

    #[test]
    fn greedy_matches_exhaustive_on_product_trees() {
        let p = desk_param(41);
        for seed in 0..40u64 {
            let d1 = (seed % 12) as u16;
            let d2 = ((seed * 7 + 3) % 12) as u16;
            let q = TypeQuery {
                base: vec![],
                params: vec![vec![0, d1, 0, d2], vec![0, d2, 1, d1]],
                neg_params: vec![],
                depth: 4,
            };
            let a = decide_type(&p, &q, SearchMode::Greedy, 100_000).unwrap();
            let b = decide_type(&p, &q, SearchMode::Exhaustive, 100_000).unwrap();
            assert_eq!(a.verdict, b.verdict, "seed {seed}");
            let o = decide_type_oracle(&p, &q, 100_000).unwrap();
            assert_eq!(b.verdict, o, "seed {seed}");
        }
    }

    #[test]
    fn small_band_queries_are_consistent() {
        let p = desk_param(43);
        // up to 3 parameters stay within every small threshold of the window
        for s in 0..50u64 {
            let ds: Vec<u16> = (0..3).map(|j| ((s * 5 + j * 11) % 12) as u16).collect();
            let params: Vec<Vec<u16>> = ds
                .iter()
                .enumerate()
                .map(|(j, &d)| vec![0, d, j as u16, (d + j as u16) % 12])
                .collect();
            let q = TypeQuery {
                base: vec![],
                params,
                neg_params: vec![],
                depth: 4,
            };
            let out = decide_type(&p, &q, SearchMode::Greedy, 100_000).unwrap();
            assert!(
                matches!(out.verdict, TypeVerdict::Consistent { .. }),
                "seed {s}: {:?}",
                out.verdict
            );
        }
    }

    #[test]
    fn witness_replays_through_relation() {
        let p = desk_param(47);
        let q = TypeQuery {
            base: vec![1],
            params: vec![vec![1, 2, 3, 4], vec![1, 5, 0, 9]],
            neg_params: vec![],
            depth: 4,
        };
        if let TypeVerdict::Consistent { witness, .. } =
            decide_type(&p, &q, SearchMode::Exhaustive, 100_000)
                .unwrap()
                .verdict
        {
            for a in &q.params {
                assert!(p.r_edge(&witness, a).unwrap());
            }
        }
    }

    #[test]
    fn obstruction_is_inconsistent_at_active_levels() {
        let p = desk_param(53);
        for n in [1usize, 3] {
            assert!(p.xi.active(n));
            let nu: Vec<u16> = vec![0; n];
            let q = obstruction_instance(&p, n, &nu).unwrap();
            assert_eq!(q.params.len(), 12);
            let out = decide_type(&p, &q, SearchMode::Exhaustive, 1_000_000).unwrap();
            assert!(
                matches!(out.verdict, TypeVerdict::Inconsistent { .. }),
                "level {n}: {:?}",
                out.verdict
            );
        }
    }

    #[test]
    fn obstruction_rejects_lazy_levels() {
        let p = desk_param(59);
        assert!(matches!(
            obstruction_instance(&p, 2, &[0, 0]),
            Err(Error::InvalidQuery(_))
        ));
    }

    #[test]
    fn negative_params_split_into_discharged_and_model_level() {
        let w = load_warmup();
        let q = TypeQuery {
            base: vec![0],
            params: vec![vec![0, 1]],
            // witness will be 01; it is related to 02 (model level) but
            // not to 10 (discharged)
            neg_params: vec![vec![0, 2], vec![1, 0]],
            depth: 2,
        };
        let out = decide_type(&w, &q, SearchMode::Exhaustive, 10_000).unwrap();
        match out.verdict {
            TypeVerdict::Consistent {
                witness,
                neg_discharged,
                neg_model_level,
            } => {
                assert_eq!(witness, vec![0, 1]);
                assert_eq!(neg_discharged, vec![1]);
                assert_eq!(neg_model_level, vec![0]);
            }
            v => panic!("expected consistent, got {v:?}"),
        }
    }

    #[test]
    fn query_json_round_trip() {
        let q = TypeQuery {
            base: vec![1, 2],
            params: vec![vec![1, 2, 3], vec![0, 0, 0]],
            neg_params: vec![vec![4, 4, 4]],
            depth: 3,
        };
        assert_eq!(TypeQuery::from_json(&q.to_json()).unwrap(), q);
    }
}
