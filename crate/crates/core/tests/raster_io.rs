mod common;

use image::{ImageFormat, Rgb, RgbImage};
use morphvuln::raster::{self, Raster, RasterError};
use rand::Rng;

#[test]
fn loads_png_pixel_scaled() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("red.png");
    RgbImage::from_pixel(1, 1, Rgb([255, 0, 0])).save(&path).unwrap();
    assert_eq!(raster::load_image(&path).unwrap().data(), &[1.0, 0.0, 0.0]);
}

#[test]
fn loads_black_jpeg() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("black.jpg");
    RgbImage::from_pixel(2, 2, Rgb([0, 0, 0]))
        .save_with_format(&path, ImageFormat::Jpeg)
        .unwrap();
    let r = raster::load_image(&path).unwrap();
    assert_eq!((r.width(), r.height()), (2, 2));
    assert!(r.data().iter().all(|&v| v == 0.0));
}

#[test]
fn png_round_trip_is_lossless_for_quantized_data() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = common::synth::rng(16);
    let img = RgbImage::from_fn(16, 16, |_, _| Rgb([rng.random(), rng.random(), rng.random()]));
    let path = tmp.path().join("a.png");
    img.save(&path).unwrap();

    let loaded = raster::load_image(&path).unwrap();
    let again = tmp.path().join("b.png");
    raster::save_image(&loaded, &again).unwrap();
    assert_eq!(raster::load_image(&again).unwrap(), loaded);
    assert_eq!(loaded.to_rgb8(), img);
}

#[test]
fn save_quantizes_once() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = common::synth::rng(17);
    let data: Vec<f32> = (0..8 * 8 * 3).map(|_| rng.random()).collect();
    let r = Raster::new(8, 8, data).unwrap();
    let path = tmp.path().join("r.png");
    raster::save_image(&r, &path).unwrap();
    let back = raster::load_image(&path).unwrap();
    for (a, b) in r.data().iter().zip(back.data()) {
        assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
    }
    assert_eq!(back.to_rgb8(), r.to_rgb8());
}

#[test]
fn half_grey_saves_as_128() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("g.png");
    raster::save_image(&Raster::filled(3, 2, [0.5; 3]).unwrap(), &path).unwrap();
    let img = image::open(&path).unwrap().to_rgb8();
    assert!(img.pixels().all(|p| p.0 == [128, 128, 128]));
}

#[test]
fn zero_width_is_rejected() {
    assert!(matches!(Raster::new(0, 4, vec![]), Err(RasterError::ZeroDimension { .. })));
}

#[test]
fn save_always_writes_png() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("out.jpg");
    raster::save_image(&Raster::filled(2, 2, [0.2, 0.4, 0.6]).unwrap(), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
}
