use ldrld_cli::config::parse_config;
use ldrld_cli::sweep::{cell_name, grid, parse_axis};
use proptest::prelude::*;

const SMOKE: &str = include_str!("../../../configs/smoke.toml");

proptest! {
    #[test]
    fn config_parser_never_panics(text in "[\\[\\]a-z_.=\"0-9\\n ,-]{0,200}") {
        let _ = parse_config(&text, &[]);
    }

    #[test]
    fn overrides_never_panic(sets in proptest::collection::vec("[a-z_.]{0,24}=?[\\[\\]0-9a-z.,\"{}= -]{0,16}", 0..4)) {
        let _ = parse_config(SMOKE, &sets);
    }

    #[test]
    fn valid_overrides_land_in_the_config(alpha in 0.0f64..100.0, depth in 2usize..=8) {
        let cfg = parse_config(SMOKE, &[format!("distill.alpha={alpha:?}"), format!("distill.depth={depth}")]).unwrap();
        prop_assert_eq!(cfg.distill.alpha, alpha);
        prop_assert_eq!(cfg.distill.depth, depth);
    }

    #[test]
    fn sweep_axes_never_panic_and_name_safely(spec in "[a-z./_]{0,10}=[0-9a-z.,/ -]{0,16}") {
        if let Ok(axis) = parse_axis(&spec) {
            prop_assert!(!axis.values.is_empty());
            for cell in grid(std::slice::from_ref(&axis)) {
                prop_assert!(!cell_name(&cell).contains('/'));
            }
        }
    }
}
