//! Attention map rendering: bilinear upsampling to the input resolution and
//! a character overlay at the attention centres of mass.

use crate::error::{Error, Result};
use crate::font::{glyph, GLYPH_COLS, GLYPH_ROWS};
use crate::tensor::{Real, Tensor};

/// Bilinear resampling of an `h x w` map to `out_h x out_w` with pixel
/// centres aligned (`src = (dst + 0.5) * h / out_h - 0.5`, clamped).
pub fn bilinear_resize<T: Real>(
    map: &Tensor<T>,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor<f32>> {
    let (h, w) = match map.shape() {
        &[h, w] if h > 0 && w > 0 => (h, w),
        s => return Err(Error::dim("bilinear_resize", s, &[1, 1])),
    };
    let coord = |dst: usize, src_len: usize, dst_len: usize| {
        let s = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5)
            .clamp(0.0, (src_len - 1) as f64);
        let i0 = s.floor() as usize;
        (i0, (i0 + 1).min(src_len - 1), s - i0 as f64)
    };
    let cols: Vec<_> = (0..out_w).map(|j| coord(j, w, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let (r0, r1, fr) = coord(i, h, out_h);
        for &(c0, c1, fc) in &cols {
            let at = |r: usize, c: usize| map.data()[r * w + c].as_f64();
            let top = at(r0, c0) * (1.0 - fc) + at(r0, c1) * fc;
            let bottom = at(r1, c0) * (1.0 - fc) + at(r1, c1) * fc;
            out.push((top * (1.0 - fr) + bottom * fr) as f32);
        }
    }
    Tensor::from_vec(&[out_h, out_w], out)
}

/// Divides by the maximum so the peak is 1; an all-zero map stays zero.
pub fn normalize_peak(map: &mut Tensor<f32>) {
    let peak = map.data().iter().cloned().fold(0.0f32, f32::max);
    if peak > 0.0 {
        map.scale(1.0 / peak);
    }
}

/// Centre of a feature-map cell `(row, col)` in input pixel coordinates.
pub fn map_to_image(pos: (f64, f64), map: (usize, usize), image: (usize, usize)) -> (f64, f64) {
    (
        (pos.0 + 0.5) * image.0 as f64 / map.0 as f64,
        (pos.1 + 0.5) * image.1 as f64 / map.1 as f64,
    )
}

/// The input dimmed to 35%, with each character drawn at full intensity
/// at `scale`, centred on its position (row, col) in input pixels.
pub fn overlay(
    image: &Tensor<f32>,
    marks: &[(char, (f64, f64))],
    scale: usize,
) -> Result<Tensor<f32>> {
    let (h, w) = match image.shape() {
        &[h, w, 1] | &[h, w] => (h, w),
        s => return Err(Error::dim("overlay", s, &[0, 0, 1])),
    };
    let mut out = Tensor::from_vec(&[h, w], image.data().iter().map(|v| v * 0.35).collect())?;
    for &(c, (row, col)) in marks {
        let Some(g) = glyph(c) else { continue };
        let top = row - (GLYPH_ROWS * scale) as f64 / 2.0;
        let left = col - (GLYPH_COLS * scale) as f64 / 2.0;
        for r in 0..GLYPH_ROWS * scale {
            for k in 0..GLYPH_COLS * scale {
                if !g.ink(r / scale, k / scale) {
                    continue;
                }
                let (y, x) = ((top + r as f64).round(), (left + k as f64).round());
                if y >= 0.0 && x >= 0.0 && (y as usize) < h && (x as usize) < w {
                    out.data_mut()[y as usize * w + x as usize] = 1.0;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_constant_maps() {
        let m = Tensor::<f64>::from_vec(&[2, 3], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let same = bilinear_resize(&m, 2, 3).unwrap();
        for (a, b) in same.data().iter().zip(m.data()) {
            assert!((*a as f64 - b).abs() < 1e-7);
        }
        let c = bilinear_resize(&Tensor::<f64>::filled(&[3, 4], 0.25), 13, 29).unwrap();
        assert!(c.data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
    }

    #[test]
    fn upsampling_interpolates_between_centres() {
        let m = Tensor::<f64>::from_vec(&[1, 2], vec![0.0, 1.0]).unwrap();
        let up = bilinear_resize(&m, 1, 4).unwrap();
        // destination centres map to -0.25, 0.25, 0.75, 1.25 in source units
        let want = [0.0, 0.25, 0.75, 1.0];
        for (a, b) in up.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-7, "{:?}", up.data());
        }
        let mut up = up;
        normalize_peak(&mut up);
        assert_eq!(up.data()[3], 1.0);
    }

    #[test]
    fn cell_centres_map_to_pixel_blocks() {
        assert_eq!(map_to_image((0.0, 0.0), (7, 40), (28, 160)), (2.0, 2.0));
        assert_eq!(map_to_image((6.0, 39.0), (7, 40), (28, 160)), (26.0, 158.0));
    }

    #[test]
    fn overlay_draws_inside_bounds() {
        let img = Tensor::<f32>::filled(&[20, 30, 1], 1.0);
        let out = overlay(&img, &[('1', (10.0, 15.0)), ('8', (-50.0, 0.0))], 2).unwrap();
        assert_eq!(out.shape(), [20, 30]);
        let lit = out.data().iter().filter(|&&v| v == 1.0).count();
        assert_eq!(lit, 4 * glyph('1').unwrap().ink_count());
        assert!(out
            .data()
            .iter()
            .all(|&v| v == 1.0 || (v - 0.35).abs() < 1e-7));
    }
}
