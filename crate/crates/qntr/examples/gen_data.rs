//! Writes a synthetic 10-class image dataset in the IDX wire format,
//! split into training and test files, for trying out the training CLI
//! without downloading anything.
//!
//! Usage: cargo run --example gen_data [OUT_DIR]

use std::path::PathBuf;

use qntr::idx::{parse_idx, synthetic_class_images, write_idx_images, write_idx_labels};

fn main() {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "data".into()).into();
    std::fs::create_dir_all(&out).expect("create output directory");

    let train_n = 1000;
    let test_n = 200;
    let (img, lbl) = synthetic_class_images(train_n + test_n, 28, 28, 10, 77);
    let ds = parse_idx(&img, &lbl, None).expect("self-generated dataset parses");

    let dim = ds.rows * ds.cols;
    let pixels: Vec<u8> = ds.images.iter().map(|v| (v * 255.0).round() as u8).collect();
    let (train_px, test_px) = pixels.split_at(train_n * dim);
    let (train_lb, test_lb) = ds.labels.split_at(train_n);

    let pairs = [
        ("train-images-idx3-ubyte", write_idx_images(train_n, 28, 28, train_px)),
        ("t10k-images-idx3-ubyte", write_idx_images(test_n, 28, 28, test_px)),
        ("train-labels-idx1-ubyte", write_idx_labels(train_lb)),
        ("t10k-labels-idx1-ubyte", write_idx_labels(test_lb)),
    ];
    for (name, bytes) in pairs {
        let path = out.join(name);
        std::fs::write(&path, bytes).expect("write dataset file");
        println!("wrote {}", path.display());
    }
}
