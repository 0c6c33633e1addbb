//! Shows how the modulated losses reweight three unimodal errors.

use modgate::autodiff::{Tensor, Value};
use modgate::modulation::{ModulatedLoss, UnimodalLosses, DEFAULT_EPS};
use modgate::Modality;

fn main() -> modgate::Result<()> {
    for raw in [[1.0, 1.0, 1.0], [1.0, 2.0, 2.0], [0.2, 1.5, 0.9], [0.5, 0.0, 0.5]] {
        let losses = UnimodalLosses::new(raw.map(|l| Value::param(Tensor::scalar(l))))?;
        let m = ModulatedLoss::compute(&losses, DEFAULT_EPS);
        m.total()?.backward()?;
        println!("losses {raw:?}  harmonic scale {:.4}", m.scale);
        for mo in Modality::ALL {
            let i = mo.index();
            println!(
                "  {:<8} weight {:>8.4}  modulated {:>8.4}  gradient {:>8.4}",
                mo.name(),
                m.weights[i],
                m.losses[i].item(),
                losses.get(mo).grad().data()[0]
            );
        }
    }
    Ok(())
}
