use wvgd::cost::SquaredEuclidean;
use wvgd::dynamics::{self, WvgdState};
use wvgd::ensemble::ParticleEnsemble;
use wvgd::oracle::Quadrature1D;
use wvgd::rng::RngStream;
use wvgd::targets::sample_random_mixture;

fn main() {
    let mut rng = RngStream::new(9);
    let target = sample_random_mixture(&mut rng, 1.5);
    println!("weights   {:?}", target.weights);
    println!("locations {:?}", target.locations);
    println!("scales    {:?}", target.scales);
    let (lo, hi) = target.window();
    let quad = Quadrature1D::new(lo, hi, 8193);
    let mean = quad.integrate(&|z| z * target.density(z));
    println!("posterior mean {mean}");

    let cost = SquaredEuclidean;
    let state = WvgdState::new(
        ParticleEnsemble::uniform(vec![vec![0.0]]).unwrap(),
        0.2,
        Some(750.0),
        0.05,
        256,
    );
    let mut cb = |s: &WvgdState, g: &dynamics::GradientEstimate| {
        if s.step % 100 == 0 {
            println!(
                "step {:4}: z = {:+.4}, comp mean {:+.4}, comp std {:.4}, ess {:.1}, grad {:+.4}",
                s.step,
                s.ensemble.position(0)[0],
                s.components[0].mean[0],
                s.components[0].log_std[0].exp(),
                g.per_particle_ess[0],
                g.per_particle_grads[0][0],
            );
        }
    };
    let (out, _) = dynamics::run(
        state,
        &target,
        &cost,
        1500,
        &RngStream::new(10),
        Some(&mut cb),
    )
    .unwrap();
    println!(
        "final z = {}, error {}",
        out.ensemble.position(0)[0],
        (out.ensemble.position(0)[0] - mean).abs()
    );
}
