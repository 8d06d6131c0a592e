//! Linear-probe accuracy on the 20-class blobs benchmark across noise levels.
//!
//! `cargo run --release -p ldrld-train --example calibrate [spread ...]`

use ldrld_train::data::{make_blobs, BlobsSpec, Split};
use ldrld_train::model::MlpSpec;
use ldrld_train::train::{train_supervised, TrainSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spreads: Vec<f64> = std::env::args().skip(1).map(|s| s.parse()).collect::<Result<_, _>>()?;
    let spreads = if spreads.is_empty() { vec![0.3, 0.35, 0.375, 0.4] } else { spreads };
    for spread in spreads {
        let spec = BlobsSpec { spread, ..BlobsSpec::desk_benchmark(0) };
        let (train, eval) = (make_blobs(&spec, Split::Train)?, make_blobs(&spec, Split::Eval)?);
        let probe = MlpSpec { input_dim: spec.dim, hidden_dims: vec![], num_classes: spec.classes, seed: 0 };
        let (_, rec) = train_supervised(&probe, &TrainSpec::new(40, 32, 0.1, 0), &train, &eval)?;
        println!(
            "spread {spread:.3}: probe train {:.3} eval {:.3}",
            rec.final_train_accuracy(),
            rec.final_eval_accuracy()
        );
    }
    Ok(())
}
