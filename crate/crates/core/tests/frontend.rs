mod common;

use std::collections::BTreeMap;

use common::random_design;
use proptest::prelude::*;
use tguard_core::verilog::{flatten, operator_counts, parse, print_ast, Ast, Item, SourceUnit};

fn unit(text: &str) -> SourceUnit {
    SourceUnit::single("rand.v", text, "top")
}

/// Operator multiset of `module` plus, recursively, every module it
/// instantiates, as expected after flattening.
fn expected_counts(ast: &Ast, module: &str) -> BTreeMap<&'static str, usize> {
    let m = ast.module(module).unwrap();
    let mut total = operator_counts(&m.items);
    for item in &m.items {
        if let Item::Instance(i) = item {
            for (k, v) in expected_counts(ast, &i.module) {
                *total.entry(k).or_insert(0) += v;
            }
        }
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn parse_is_deterministic(seed in any::<u64>()) {
        let text = random_design(seed);
        prop_assert_eq!(parse(&unit(&text)).unwrap(), parse(&unit(&text)).unwrap());
    }

    #[test]
    fn print_parse_round_trip(seed in any::<u64>()) {
        let ast = parse(&unit(&random_design(seed))).unwrap();
        let printed = print_ast(&ast);
        let again = parse(&unit(&printed)).unwrap();
        prop_assert_eq!(print_ast(&again), printed);
    }

    #[test]
    fn flatten_preserves_operator_multiset(seed in any::<u64>()) {
        let ast = parse(&unit(&random_design(seed))).unwrap();
        let flat = flatten(&ast, "top").unwrap();
        prop_assert!(flat.items.iter().all(|i| !matches!(i, Item::Instance(_))));
        prop_assert_eq!(operator_counts(&flat.items), expected_counts(&ast, "top"));
    }
}
