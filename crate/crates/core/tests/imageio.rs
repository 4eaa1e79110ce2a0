mod common;

use std::path::Path;

use hdrfeat::imageio::{
    decode_ldr, load_dataset, load_sample, ppm, preview_codes, read_exposures, read_hdr_rgbe, read_ldr, rgbe,
    write_hdr_rgbe, write_preview, HdrImage, ImageError, SceneLayout,
};
use rand::Rng;

/// Minimal baseline TIFF: uncompressed chunky RGB in `rows_per_strip` strips.
fn tiff_bytes(w: usize, h: usize, depth: u8, codes: &[u16], big_endian: bool, rows_per_strip: usize) -> Vec<u8> {
    let u16b = |v: u16| if big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
    let u32b = |v: u32| if big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
    let bytes_per_row = w * 3 * depth as usize / 8;
    let strips: Vec<(usize, usize)> = (0..h)
        .step_by(rows_per_strip)
        .map(|y| (y, rows_per_strip.min(h - y)))
        .collect();

    let n_entries = 10;
    let ifd_len = 2 + 12 * n_entries + 4;
    let extra_at = 8 + ifd_len;
    let bps_at = extra_at;
    let offsets_at = bps_at + 6;
    let counts_at = offsets_at + 4 * strips.len();
    let data_at = counts_at + 4 * strips.len();

    let mut out = Vec::new();
    out.extend_from_slice(if big_endian { b"MM\0*" } else { b"II*\0" });
    out.extend_from_slice(&u32b(8));
    out.extend_from_slice(&u16b(n_entries as u16));
    let mut entry = |tag: u16, kind: u16, count: u32, inline: Vec<u8>| {
        out.extend_from_slice(&u16b(tag));
        out.extend_from_slice(&u16b(kind));
        out.extend_from_slice(&u32b(count));
        let mut v = inline;
        v.resize(4, 0);
        out.extend_from_slice(&v);
    };
    let short = |v: u16| u16b(v).to_vec();
    let long = |v: u32| u32b(v).to_vec();
    let (short_t, long_t) = (3, 4);
    let many = strips.len() > 1;
    entry(256, long_t, 1, long(w as u32));
    entry(257, short_t, 1, short(h as u16));
    entry(258, short_t, 3, long(bps_at as u32));
    entry(259, short_t, 1, short(1));
    entry(262, short_t, 1, short(2));
    entry(
        273,
        long_t,
        strips.len() as u32,
        long(if many { offsets_at } else { data_at } as u32),
    );
    entry(277, short_t, 1, short(3));
    entry(278, short_t, 1, short(rows_per_strip as u16));
    let single_count = (strips[0].1 * bytes_per_row) as u32;
    entry(
        279,
        long_t,
        strips.len() as u32,
        long(if many { counts_at as u32 } else { single_count }),
    );
    entry(284, short_t, 1, short(1));
    out.extend_from_slice(&u32b(0));
    assert_eq!(out.len(), extra_at);

    for _ in 0..3 {
        out.extend_from_slice(&u16b(depth as u16));
    }
    let mut offset = data_at;
    for &(_, rows) in &strips {
        out.extend_from_slice(&u32b(offset as u32));
        offset += rows * bytes_per_row;
    }
    for &(_, rows) in &strips {
        out.extend_from_slice(&u32b((rows * bytes_per_row) as u32));
    }
    assert_eq!(out.len(), data_at);
    for &c in codes {
        if depth == 8 {
            out.push(c as u8);
        } else {
            out.extend_from_slice(&u16b(c));
        }
    }
    out
}

fn png_bytes(w: usize, h: usize, depth: u8, codes: &[u16]) -> Vec<u8> {
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, w as u32, h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(if depth == 8 {
            png::BitDepth::Eight
        } else {
            png::BitDepth::Sixteen
        });
        let mut writer = enc.write_header().unwrap();
        let data: Vec<u8> = if depth == 8 {
            codes.iter().map(|&c| c as u8).collect()
        } else {
            codes.iter().flat_map(|c| c.to_be_bytes()).collect()
        };
        writer.write_image_data(&data).unwrap();
    }
    buf
}

fn random_codes(w: usize, h: usize, depth: u8, seed: u64) -> Vec<u16> {
    let mut r = common::rng(seed);
    let max = if depth == 8 { 255 } else { 65535 };
    (0..w * h * 3).map(|_| r.random_range(0..=max)).collect()
}

fn normalized(codes: &[u16], depth: u8) -> Vec<f32> {
    let max = if depth == 8 { 255.0 } else { 65535.0 };
    codes.iter().map(|&c| (c as f64 / max) as f32).collect()
}

#[test]
fn tiff_png_and_ppm_decode_identically() {
    for depth in [8u8, 16] {
        let (w, h) = (7, 5);
        let codes = random_codes(w, h, depth, depth as u64);
        let want = normalized(&codes, depth);
        let encodings = [
            tiff_bytes(w, h, depth, &codes, false, h),
            tiff_bytes(w, h, depth, &codes, true, h),
            tiff_bytes(w, h, depth, &codes, false, 2),
            tiff_bytes(w, h, depth, &codes, true, 3),
            png_bytes(w, h, depth, &codes),
            ppm::encode(w, h, depth, &codes).unwrap(),
        ];
        for (i, bytes) in encodings.iter().enumerate() {
            let img = decode_ldr(bytes).unwrap_or_else(|e| panic!("encoding {i} depth {depth}: {e}"));
            assert_eq!(
                (img.width(), img.height(), img.bit_depth()),
                (w, h, depth),
                "encoding {i}"
            );
            assert_eq!(img.pixels(), want.as_slice(), "encoding {i} depth {depth}");
        }
    }
}

#[test]
fn normalization_examples() {
    let img = decode_ldr(&ppm::encode(1, 1, 16, &[32768, 0, 65535]).unwrap()).unwrap();
    assert!((img.pixels()[0] as f64 - 32768.0 / 65535.0).abs() < 1e-7);
    assert!((img.pixels()[0] - 0.500008).abs() < 1e-6);
    assert_eq!(&img.pixels()[1..], [0.0, 1.0]);
    let img = decode_ldr(&png_bytes(1, 1, 8, &[255, 0, 255])).unwrap();
    assert_eq!(img.pixels(), [1.0, 0.0, 1.0]);
}

#[test]
fn unsupported_tiff_is_rejected() {
    let mut bytes = tiff_bytes(2, 2, 8, &[0; 12], false, 2);
    // compression tag value lives in the fourth IFD entry
    let at = 8 + 2 + 3 * 12 + 8;
    bytes[at] = 5;
    assert!(decode_ldr(&bytes).is_err());
    assert!(decode_ldr(b"GIF89a").is_err());
    assert!(decode_ldr(&bytes[..20]).is_err());
}

#[test]
fn rgbe_random_round_trip_and_file() {
    let mut r = common::rng(12);
    let px: Vec<f32> = (0..1000)
        .flat_map(|_| {
            let lum = 10f64.powf(r.random_range(-4.0..4.0));
            [0; 3].map(|_| (lum * r.random_range(0.5..=1.0)) as f32)
        })
        .collect();
    let img = HdrImage::new(40, 25, px).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.hdr");
    write_hdr_rgbe(&img, &path).unwrap();
    let back = read_hdr_rgbe(&path).unwrap();
    assert_eq!((back.width(), back.height()), (40, 25));
    for (a, b) in img.pixels().iter().zip(back.pixels()) {
        assert!(((a - b) / a).abs() < 0.01, "{a} vs {b}");
    }
    assert_eq!(rgbe::decode_pixel(rgbe::encode_pixel([0.0; 3])), [0.0; 3]);
    // a second encode of decoded data is lossless
    assert_eq!(
        rgbe::encode(&back),
        rgbe::encode(&rgbe::decode(&rgbe::encode(&back)).unwrap())
    );
}

fn write_scene(dir: &Path, w: usize, h: usize, ev: &str, with_gt: bool) {
    std::fs::create_dir_all(dir).unwrap();
    for (i, name) in ["a_short.tif", "b_medium.ppm", "c_long.png"].iter().enumerate() {
        let codes = random_codes(w, h, 16, i as u64);
        let bytes = match i {
            0 => tiff_bytes(w, h, 16, &codes, false, 4),
            1 => ppm::encode(w, h, 16, &codes).unwrap(),
            _ => png_bytes(w, h, 16, &codes),
        };
        std::fs::write(dir.join(name), bytes).unwrap();
    }
    std::fs::write(dir.join("exposures.txt"), ev).unwrap();
    if with_gt {
        let gt = HdrImage::filled(w, h, 0.25).unwrap();
        write_hdr_rgbe(&gt, dir.join("gt.hdr")).unwrap();
    }
}

#[test]
fn scene_loading() {
    let root = tempfile::tempdir().unwrap();
    write_scene(&root.path().join("001"), 12, 10, "-2\n0\n2\n", true);
    write_scene(&root.path().join("002"), 12, 10, "-3 0 3", false);

    let s = load_sample(root.path().join("001")).unwrap();
    assert_eq!(s.sample_id(), "001");
    assert_eq!(s.ev(), [-2.0, 0.0, 2.0]);
    assert_eq!(s.exposure_times(), [0.25, 1.0, 4.0]);
    assert_eq!(s.gt().unwrap().pixels()[0], 0.25);
    let medium = read_ldr(root.path().join("001/b_medium.ppm")).unwrap();
    assert_eq!(s.ldr()[1], medium);

    let s = load_sample(root.path().join("002")).unwrap();
    assert!(s.gt().is_none());
    assert_eq!(s.exposure_times(), [0.125, 1.0, 8.0]);

    let all = load_dataset(root.path(), &SceneLayout::default()).unwrap();
    assert_eq!(all.iter().map(|s| s.sample_id()).collect::<Vec<_>>(), ["001", "002"]);
}

#[test]
fn scene_errors() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("bad");
    write_scene(&dir, 12, 10, "-2 0 2", true);
    let codes = random_codes(11, 10, 8, 9);
    std::fs::write(dir.join("c_long.png"), png_bytes(11, 10, 8, &codes)).unwrap();
    match load_sample(&dir) {
        Err(ImageError::DimensionMismatch { path, found_w, .. }) => {
            assert!(path.ends_with("c_long.png"));
            assert_eq!(found_w, 11);
        }
        other => panic!("expected a dimension mismatch, got {other:?}"),
    }

    std::fs::write(dir.join("exposures.txt"), "-2\n0\n").unwrap();
    assert!(read_exposures(dir.join("exposures.txt")).is_err());
    std::fs::write(dir.join("exposures.txt"), "0 -2 2").unwrap();
    assert!(load_sample(&dir).is_err());
    std::fs::remove_file(dir.join("exposures.txt")).unwrap();
    assert!(matches!(load_sample(&dir), Err(ImageError::Missing { .. })));
    assert!(load_dataset(root.path().join("nowhere"), &SceneLayout::default()).is_err());
}

#[test]
fn previews() {
    let black = HdrImage::filled(3, 2, 0.0).unwrap();
    assert!(preview_codes(&black, 5000.0).iter().all(|&c| c == 0));
    let white = HdrImage::filled(3, 2, 1.0).unwrap();
    assert!(preview_codes(&white, 5000.0).iter().all(|&c| c == 255));
    let gray = HdrImage::filled(3, 2, 0.5).unwrap();
    assert!(preview_codes(&gray, 5000.0).iter().all(|&c| c == 234));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ppm");
    write_preview(&gray, 5000.0, &path).unwrap();
    let (w, h, depth, codes) = ppm::decode(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!((w, h, depth), (3, 2, 8));
    assert!(codes.iter().all(|&c| c == 234));
}
