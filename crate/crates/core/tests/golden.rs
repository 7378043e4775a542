//! Byte-exact image files, rendered independently of this crate.

use riemann_latent::persistence::{probability_to_byte, read_pgm, Pgm};
use riemann_latent::vae::{DiskRingImage, Shape};

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden");

#[test]
fn ring_image_matches_golden_file() {
    let img = DiskRingImage::render(Shape::Ring, (15, 17), 9.5, 3.0);
    let expected = std::fs::read(format!("{GOLDEN}/ring.pgm")).unwrap();
    assert_eq!(Pgm::from_binary(&img).unwrap().to_bytes(), expected);
}

#[test]
fn probability_ramp_matches_golden_file() {
    let bytes: Vec<u8> = (0..=510).map(|k| probability_to_byte(k as f64 / 510.0)).collect();
    let expected = read_pgm(format!("{GOLDEN}/ramp.pgm").as_ref()).unwrap();
    assert_eq!((expected.width, expected.height), (511, 1));
    assert_eq!(bytes, expected.pixels);
}

#[test]
fn golden_files_reparse_to_identical_bytes() {
    for name in ["ring.pgm", "ramp.pgm"] {
        let raw = std::fs::read(format!("{GOLDEN}/{name}")).unwrap();
        assert_eq!(Pgm::parse(&raw).unwrap().to_bytes(), raw, "{name}");
    }
}
