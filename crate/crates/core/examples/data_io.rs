//! Dataset formats: synthetic blob images written as PPM/PGM pairs and read
//! back, a seeded train/test split, and a CSV vector dataset.
use stochnet::data::{load_images, load_vectors, save_images, split, synth_blob_task};
use stochnet::model::UnitKind;

fn main() {
    let dir = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("stochnet-blobs"));
    let blobs = synth_blob_task(6, 12, 16, 42);
    save_images(&dir, &blobs).unwrap();
    let back = load_images(&dir).unwrap();
    println!("{} images {}x{} in {}", back.len(), back.height, back.width, dir.display());
    for ex in &back.examples {
        let fg = ex.mask.iter().filter(|&&m| m).count();
        println!("  {}: {:.0}% foreground", ex.name, 100.0 * fg as f64 / ex.mask.len() as f64);
    }
    let (train, test) = split(&back.examples, 4, 0).unwrap();
    println!("split: train {:?} test {:?}", train.iter().map(|e| &e.name).collect::<Vec<_>>(), test.iter().map(|e| &e.name).collect::<Vec<_>>());
    let examples = back.to_examples(UnitKind::Tanh);
    println!("tanh targets of first image start {:?}", &examples[0].y[..8]);

    let csv = dir.join("xor.csv");
    std::fs::write(&csv, "a,b,y\n0,0,0\n0,1,1\n1,0,1\n1,1,0\n").unwrap();
    let v = load_vectors(&csv, 1, true).unwrap();
    println!("{}: {} rows, {} features", csv.display(), v.len(), v.feature_count);
}
