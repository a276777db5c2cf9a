//! Evaluate the contrastive losses on a tiny two-view batch with its
//! manifestation embeddings, and take one temperature step.

use maninex::contrastive::{gradients, loss_multimodal, loss_unimodal, LossKind, Modality, ProjectionSet, Temperature};

fn main() -> maninex::Result<()> {
    let mut batch = ProjectionSet::new(3);
    let rows = [
        ([1.0, 0.1, 0.0], [0.9, 0.2, 0.1], [1.0, 0.0, 0.2]),
        ([0.0, 1.0, 0.1], [0.1, 0.8, 0.0], [0.1, 1.0, 0.0]),
        ([0.1, 0.0, 1.0], [0.0, 0.2, 0.9], [0.0, 0.1, 1.0]),
    ];
    for (id, (cc, mlo, m)) in rows.iter().enumerate() {
        batch.push(cc, Modality::ImageCc, id as u64);
        batch.push(mlo, Modality::ImageMlo, id as u64);
        batch.push(m, Modality::Manifestation, id as u64);
    }

    let mut tau = Temperature::new(0.5);
    let l = loss_multimodal(&batch, tau.tau())?;
    println!("tau {:.3}: uni {:.4}  cross {:.4}  total {:.4}", tau.tau(), l.l_uni, l.l_m, l.l_multi);

    let g = gradients(&batch, tau.tau(), LossKind::Multimodal)?;
    println!("d loss / d log tau = {:.4}", g.d_log_tau);
    tau.step(g.d_log_tau, 0.1);
    println!("after one step tau {:.3}: uni {:.4}", tau.tau(), loss_unimodal(&batch, tau.tau())?);
    Ok(())
}
