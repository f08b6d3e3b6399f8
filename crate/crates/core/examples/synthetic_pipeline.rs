//! End-to-end resumable run on a small synthetic benchmark. Pass `gan` to use
//! the adversarial style transfer instead of moment matching.

use xsensor::pipeline::{run, write_synth, PipelineConfig, StyleModeName, SynthSpec};

fn main() -> xsensor::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mode = match std::env::args().nth(1).as_deref() {
        Some("gan") => StyleModeName::Gan,
        _ => StyleModeName::Stats,
    };
    let dir = std::env::temp_dir().join("xsensor-synthetic");
    let spec = SynthSpec { tiles_per_domain: 16, tile_size: 32, region_size: 16, ..SynthSpec::default() };
    let mut cfg = PipelineConfig::load(&write_synth(&spec, mode, &dir)?)?;
    cfg.style.train.steps = 60;
    cfg.segmentation.steps = 150;

    let first = run(&cfg)?;
    println!("executed: {:?}", first.executed);
    println!(
        "baseline mIoU {} -> adapted mIoU {}",
        first.report["baseline"]["miou"], first.report["adapted"]["miou"]
    );
    let again = run(&cfg)?;
    println!("second run skipped {} stages, executed {:?}", again.skipped.len(), again.executed);
    println!("artifacts in {}", first.out_dir.display());
    Ok(())
}
