use cat_harness::image::{load_image, save_image, ImageU8};
use proptest::prelude::*;

fn image(h: usize, w: usize, c: usize, seed: u8) -> ImageU8 {
    let data = (0..h * w * c).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
    ImageU8::new(h, w, c, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn files_roundtrip(h in 1usize..20, w in 1usize..20, rgb in any::<bool>(), seed in any::<u8>()) {
        let dir = tempfile::tempdir().unwrap();
        let img = image(h, w, if rgb { 3 } else { 1 }, seed);
        let ext = if rgb { "ppm" } else { "pgm" };
        for name in ["a.png".to_string(), format!("a.{ext}"), "a.pnm".to_string()] {
            let path = dir.path().join(name);
            save_image(&img, &path).unwrap();
            prop_assert_eq!(load_image(&path).unwrap(), img.clone());
        }
    }
}

#[test]
fn rejects_sixteen_bit_png() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("deep.png");
    let file = std::fs::File::create(&path).unwrap();
    let mut enc = png::Encoder::new(file, 2, 2);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    enc.write_header().unwrap().write_image_data(&[0; 8]).unwrap();
    let err = load_image(&path).unwrap_err().to_string();
    assert!(err.contains("16-bit") && err.contains("deep.png"), "{err}");
}

#[test]
fn rejects_alpha_and_unknown_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rgba.png");
    let file = std::fs::File::create(&path).unwrap();
    let mut enc = png::Encoder::new(file, 1, 1);
    enc.set_color(png::ColorType::Rgba);
    enc.set_depth(png::BitDepth::Eight);
    enc.write_header().unwrap().write_image_data(&[1, 2, 3, 4]).unwrap();
    assert!(load_image(&path).is_err());

    let junk = dir.path().join("junk.png");
    std::fs::write(&junk, b"not an image").unwrap();
    assert!(load_image(&junk).is_err());
    assert!(load_image(dir.path().join("missing.png")).is_err());
}

#[test]
fn output_extension_must_match_channels() {
    let dir = tempfile::tempdir().unwrap();
    assert!(save_image(&image(2, 2, 3, 0), dir.path().join("x.pgm")).is_err());
    assert!(save_image(&image(2, 2, 1, 0), dir.path().join("x.ppm")).is_err());
    assert!(save_image(&image(2, 2, 1, 0), dir.path().join("x.bmp")).is_err());
}

#[test]
fn palette_png_expands() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pal.png");
    let file = std::fs::File::create(&path).unwrap();
    let mut enc = png::Encoder::new(file, 2, 1);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_palette(vec![10, 20, 30, 40, 50, 60]);
    enc.write_header().unwrap().write_image_data(&[1, 0]).unwrap();
    let img = load_image(&path).unwrap();
    assert_eq!(img.data, vec![40, 50, 60, 10, 20, 30]);
}
