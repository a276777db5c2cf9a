//! Pretrain the toy encoders on a small population with hard negatives,
//! then probe the frozen image representation.

use maninex::negsampler::ManiNegParams;
use maninex::toytrain::{
    alignment_histogram, generate_synthetic, linear_probe, pretrain, ProbeConfig, SamplerKind, Scenario, Split,
    SyntheticSpec, TrainConfig,
};

fn main() -> maninex::Result<()> {
    let data = generate_synthetic(&SyntheticSpec { n_instances: 800, ..SyntheticSpec::default() }, 11)?;
    let split = Split::seven_one_two(data.len(), 11);
    let cfg = TrainConfig { steps: 400, warmup_steps: 40, seed: 0, ..TrainConfig::default() };
    let mut model = cfg.init_model(&data);

    let before = linear_probe(&model, &data, &split.train, &split.test, ProbeConfig::default())?;
    let strategy = SamplerKind::Maninegs.strategy(ManiNegParams::default());
    let log = pretrain(&mut model, &data, &split.train, &strategy, Scenario::Multimodal, &cfg)?;
    for e in log.iter().step_by(100).chain(log.last()) {
        println!("step {:4}  loss {:.4}  tau {:.3}", e.step, e.objective(), e.tau);
    }

    let after = linear_probe(&model, &data, &split.train, &split.test, ProbeConfig::default())?;
    let align = alignment_histogram(&model, &data, &split.test, 20)?;
    println!("probe AUC {before:.4} -> {after:.4}");
    println!("alignment mean {:.4}", align.mean);
    Ok(())
}
