//! `--sweep` axes and their cartesian product.

use crate::error::{CliError, Result};

/// One swept key with its values, kept as the literal text that is later fed
/// through the override parser.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

fn expand_alias(key: &str) -> String {
    match key {
        "d" | "depth" => "distill.depth".into(),
        "alpha" | "beta" | "gamma" | "tau" => format!("distill.{key}"),
        other => other.into(),
    }
}

/// Parses `key=a..b` (inclusive integer range) or `key=v1,v2,...`.
pub fn parse_axis(spec: &str) -> Result<Axis> {
    let bad = |why: &str| CliError::Config(format!("sweep {spec:?}: {why}"));
    let (key, rhs) = spec.split_once('=').ok_or_else(|| bad("expected key=a..b or key=v1,v2"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(bad("empty key"));
    }
    let values: Vec<String> = if let Some((a, b)) = rhs.split_once("..") {
        let (a, b): (i64, i64) = (
            a.trim().parse().map_err(|_| bad("range bounds must be integers"))?,
            b.trim().parse().map_err(|_| bad("range bounds must be integers"))?,
        );
        if a > b {
            return Err(bad("empty range"));
        }
        if b - a >= 10_000 {
            return Err(bad("range too long"));
        }
        (a..=b).map(|v| v.to_string()).collect()
    } else {
        rhs.split(',').map(|v| v.trim().to_string()).collect()
    };
    if values.iter().any(String::is_empty) {
        return Err(bad("empty value"));
    }
    Ok(Axis { key: expand_alias(key), values })
}

/// Every combination of axis values; the first axis varies slowest.
pub fn grid(axes: &[Axis]) -> Vec<Vec<(String, String)>> {
    let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for axis in axes {
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                axis.values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.push((axis.key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    cells
}

/// Directory-safe label such as `depth=7_alpha=4`.
pub fn cell_name(cell: &[(String, String)]) -> String {
    let clean = |s: &str| -> String {
        s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
    };
    cell.iter()
        .map(|(k, v)| format!("{}={}", clean(k.rsplit('.').next().unwrap_or(k)), clean(v)))
        .collect::<Vec<_>>()
        .join("_")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_and_list() {
        let a = parse_axis("d=2..5").unwrap();
        assert_eq!(a.key, "distill.depth");
        assert_eq!(a.values, vec!["2", "3", "4", "5"]);
        let b = parse_axis("distill.tau = 1, 2.5 ,4").unwrap();
        assert_eq!(b.values, vec!["1", "2.5", "4"]);
        assert_eq!(parse_axis("alpha=1").unwrap().key, "distill.alpha");
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["d", "=1,2", "d=5..2", "d=a..b", "d=1,,2", "d=0..100000"] {
            assert!(parse_axis(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn product_order() {
        let axes = [parse_axis("alpha=1,4").unwrap(), parse_axis("beta=0,7").unwrap()];
        let g = grid(&axes);
        let names: Vec<String> = g.iter().map(|c| cell_name(c)).collect();
        assert_eq!(names, vec!["alpha=1_beta=0", "alpha=1_beta=7", "alpha=4_beta=0", "alpha=4_beta=7"]);
        assert_eq!(grid(&[]), vec![Vec::<(String, String)>::new()]);
    }

    #[test]
    fn names_are_path_safe() {
        assert_eq!(cell_name(&[("out_dir".into(), "../x y".into())]), "out_dir=.._x_y");
        assert_eq!(cell_name(&[("a/b".into(), "1".into())]), "a_b=1");
    }
}
