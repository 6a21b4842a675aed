//! Cross-module integration: forge a sequence, wrap it in a parameter,
//! then push the same parameter through the type checker and the
//! Boolean-algebra constructions, checking the layers agree with each
//! other rather than with fixed expected values.

use paramforge::boolalg::{
    check_ext1, find_refinement, free_extension, pattern_from_parameter,
};
use paramforge::graphforge::forge_sequence;
use paramforge::numerics::FastProfile;
use paramforge::parameter::{check_axioms, LevelFunction, LevelRelation, Parameter, Side};
use paramforge::typecheck::{decide_type, SearchMode, TypeQuery, TypeVerdict};

fn tiny_param(seed: u64) -> Parameter {
    let profile = FastProfile::default_tiny();
    let graphs = forge_sequence(&profile, seed, 2, 128).unwrap();
    Parameter::new(graphs, LevelFunction::from_bit_string("01", 1).unwrap()).unwrap()
}

#[test]
fn forged_parameter_layers_agree() {
    let param = tiny_param(29);
    assert!(check_axioms(&param, 2, 1_000_000).unwrap().pass());

    // the pattern element of a subset is full exactly when some left node
    // relates to every chosen right node, which is the same question the
    // type checker answers from the empty base
    let theta = 3;
    let pattern = pattern_from_parameter(&param, 2, theta).unwrap();
    let rights = param.right_nodes(2);
    for (i, a) in rights.iter().enumerate() {
        for b in rights.iter().skip(i) {
            let q = TypeQuery {
                base: vec![],
                params: vec![a.clone(), b.clone()],
                neg_params: vec![],
                depth: 2,
            };
            let out = decide_type(&param, &q, SearchMode::Exhaustive, 1_000_000).unwrap();
            let consistent = matches!(out.verdict, TypeVerdict::Consistent { .. });
            // atoms assigning indices 0 and 1 to these two nodes exist in
            // the pair element iff the pair is jointly realizable
            let pair_full = !pattern.b[3].is_zero();
            if !consistent {
                assert!(!pair_full, "pattern misses an inconsistent pair");
            }
            assert!(consistent, "covering threshold should realize {a:?}, {b:?}");
        }
    }

    // the free extension of that pattern admits its canonical solution
    let ext = free_extension(&pattern).unwrap();
    let report = check_ext1(&ext, &ext.solution, &pattern.b, 100).unwrap();
    assert!(report.pass(), "{report:?}");

    // and a multiplicative refinement exists whenever the full element
    // meets the trivial seed
    let refined = find_refinement(&pattern, &[pattern.ba.one()]).unwrap();
    assert!(refined.is_some());
}

#[test]
fn shipped_profiles_match_builtins() {
    for (path, builtin) in [
        ("../../profiles/desk.json", FastProfile::default_desk()),
        ("../../profiles/tiny.json", FastProfile::default_tiny()),
    ] {
        let text = std::fs::read_to_string(path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let parsed = FastProfile::from_json(&v).unwrap();
        assert_eq!(parsed, builtin, "{path}");
    }
}

#[test]
fn children_and_widths_are_consistent() {
    let param = tiny_param(29);
    for k in 0..2 {
        for side in [Side::Left, Side::Right] {
            for node in match side {
                Side::Left => param.left_nodes(k),
                Side::Right => param.right_nodes(k),
            } {
                let kids = param.children(side, &node);
                assert_eq!(kids.len(), param.width(k).unwrap());
            }
        }
    }
}
