//! Interactive segmentation offline: a BN-trained model segments a held-out
//! blob image, then a few pixels of the true mask are clamped as scribbles
//! and Gibbs sampling of the clamped posterior refines the marginals.
//!
//! cargo run --release --example scribble_segmentation -- [out_dir]
use stochnet::data::Pnm;
use stochnet::evaluate::Decision;
use stochnet::experiment::BlobProtocol;
use stochnet::inference::{iou, max_marginal_decide, ClampSet, GibbsConfig};
use stochnet::rng::RngStream;
use stochnet::segment::{decision_pgm, label_event, marginal_pgm, segment_image};

fn main() {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("stochnet-scribbles"));
    std::fs::create_dir_all(&out).unwrap();
    let protocol = BlobProtocol { iterations: 1500, ..Default::default() };
    let run = protocol.run(0).unwrap();
    let net = run.bn_net;
    let kind = net.spec().output().kind;
    let (_, test) = protocol.data(0);
    let gibbs = GibbsConfig { burn_in: 200, sweeps: 2000, thinning: 1 };

    for ex in test.examples.iter().take(3) {
        let mut rng = RngStream::new(5);
        let plain = segment_image(&net, &ex.image, None, Decision::Sampled { samples: 1000 }, gibbs, &mut rng).unwrap();
        // Every 23rd pixel as a scribble, labelled from the ground truth.
        let mut clamp = ClampSet::new(net.output_count());
        for p in (0..ex.mask.len()).step_by(23) {
            clamp.set(p, label_event(kind, ex.mask[p]));
        }
        let refined = segment_image(&net, &ex.image, Some(&clamp), Decision::Deterministic, gibbs, &mut rng).unwrap();
        let score = |f| iou(&max_marginal_decide(f), &ex.mask).unwrap();
        println!("{}: {} scribbles, IoU {:.3} -> {:.3}", ex.name, clamp.len(), score(&plain), score(&refined));
        marginal_pgm(&refined).save(&out.join(format!("{}_marginal.pgm", ex.name))).unwrap();
        decision_pgm(&refined).save(&out.join(format!("{}_decision.pgm", ex.name))).unwrap();
        let scribble = (0..ex.mask.len()).map(|p| match clamp.get(p) {
            Some(_) if ex.mask[p] => 255,
            Some(_) => 0,
            None => 128,
        });
        Pnm::gray(test.width, test.height, scribble.collect()).save(&out.join(format!("{}_scribble.pgm", ex.name))).unwrap();
    }
    println!("wrote {}", out.display());
}
