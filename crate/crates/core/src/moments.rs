//! Image moments and player-heading recovery.
//!
//! Coordinates follow image convention: `x` is the column index, `y` the row
//! index, origin at the top-left pixel.

use std::f64::consts::FRAC_PI_2;

use crate::episodes::{Direction, Raster};
use crate::{Error, Result};

/// Angular tolerance (radians) around the horizontal and vertical axes
/// within which a blob still counts as cardinal.
pub const CARDINAL_TOLERANCE: f64 = 10.0 * std::f64::consts::PI / 180.0;

#[derive(Clone, Debug, PartialEq)]
pub struct MomentSet {
    /// `raw[p][q]` = M_pq for p, q ∈ {0, 1, 2}.
    pub raw: [[f64; 3]; 3],
    pub centroid: (f64, f64),
    /// `central[p][q]` = μ_pq for p + q ≤ 2; other entries are zero.
    pub central: [[f64; 3]; 3],
    /// (μ'20, μ'02, μ'11)
    pub normalized_central: (f64, f64, f64),
    /// Orientation on the principal branch `(-π/2, π/2]`; `None` when the
    /// blob is isotropic.
    pub theta: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Heading {
    Cardinal(Direction),
    NonCardinal,
}

pub fn raw_moment(r: &Raster, p: u32, q: u32) -> f64 {
    let mut sum = 0.0;
    for y in 0..r.height {
        let yq = (y as f64).powi(q as i32);
        for x in 0..r.width {
            let i = r.get(x, y);
            if i != 0.0 {
                sum += (x as f64).powi(p as i32) * yq * i;
            }
        }
    }
    sum
}

fn central_moment(r: &Raster, p: u32, q: u32, cx: f64, cy: f64) -> f64 {
    let mut sum = 0.0;
    for y in 0..r.height {
        let dy = (y as f64 - cy).powi(q as i32);
        for x in 0..r.width {
            let i = r.get(x, y);
            if i != 0.0 {
                sum += (x as f64 - cx).powi(p as i32) * dy * i;
            }
        }
    }
    sum
}

fn is_isotropic(mu20: f64, mu02: f64, mu11: f64) -> bool {
    let scale = mu20.abs().max(mu02.abs()).max(f64::MIN_POSITIVE);
    (mu20 - mu02).abs() <= 1e-12 * scale && mu11.abs() <= 1e-12 * scale
}

/// Raw, central and normalized second-order moments plus orientation.
pub fn central_moments(r: &Raster) -> Result<MomentSet> {
    let mut raw = [[0.0; 3]; 3];
    for (p, row) in raw.iter_mut().enumerate() {
        for (q, m) in row.iter_mut().enumerate() {
            *m = raw_moment(r, p as u32, q as u32);
        }
    }
    let m00 = raw[0][0];
    if m00 <= 0.0 {
        return Err(Error::EmptyBlob);
    }
    let cx = raw[1][0] / m00;
    let cy = raw[0][1] / m00;

    let mut central = [[0.0; 3]; 3];
    for p in 0..3u32 {
        for q in 0..3 - p {
            central[p as usize][q as usize] = central_moment(r, p, q, cx, cy);
        }
    }
    let mu20 = raw[2][0] / m00 - cx * cx;
    let mu02 = raw[0][2] / m00 - cy * cy;
    let mu11 = raw[1][1] / m00 - cx * cy;
    let theta = (!is_isotropic(mu20, mu02, mu11)).then(|| 0.5 * (2.0 * mu11).atan2(mu20 - mu02));

    Ok(MomentSet {
        raw,
        centroid: (cx, cy),
        central,
        normalized_central: (mu20, mu02, mu11),
        theta,
    })
}

/// Blob orientation Θ = ½·atan2(2μ'11, μ'20 − μ'02).
pub fn orientation(r: &Raster) -> Result<f64> {
    central_moments(r)?.theta.ok_or(Error::OrientationUndefined)
}

fn bounding_box(r: &Raster) -> Option<(usize, usize, usize, usize)> {
    let mut bb: Option<(usize, usize, usize, usize)> = None;
    for y in 0..r.height {
        for x in 0..r.width {
            if r.get(x, y) > 0.0 {
                bb = Some(match bb {
                    None => (x, y, x, y),
                    Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                });
            }
        }
    }
    bb
}

/// Recovers the player's heading from a raster holding only the player blob.
///
/// Θ picks the axis. Along that axis the apex points away from the heavy
/// base, so the sign of (bounding-box centre − centroid) gives the sense.
pub fn infer_direction(r: &Raster) -> Heading {
    let Ok(m) = central_moments(r) else {
        return Heading::NonCardinal;
    };
    let Some(theta) = m.theta else {
        return Heading::NonCardinal;
    };
    let Some((x0, y0, x1, y1)) = bounding_box(r) else {
        return Heading::NonCardinal;
    };
    let (cx, cy) = m.centroid;
    let skew_eps = 1e-6;

    if theta.abs() <= CARDINAL_TOLERANCE {
        let skew = (x0 + x1) as f64 / 2.0 - cx;
        if skew > skew_eps {
            return Heading::Cardinal(Direction::Right);
        }
        if skew < -skew_eps {
            return Heading::Cardinal(Direction::Left);
        }
    } else if (theta.abs() - FRAC_PI_2).abs() <= CARDINAL_TOLERANCE {
        let skew = (y0 + y1) as f64 / 2.0 - cy;
        if skew > skew_eps {
            return Heading::Cardinal(Direction::Down);
        }
        if skew < -skew_eps {
            return Heading::Cardinal(Direction::Up);
        }
    }
    Heading::NonCardinal
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_4, PI};

    use super::*;
    use crate::episodes::render_player_glyph;

    fn ones(w: usize, h: usize) -> Raster {
        Raster::from_fn(w, h, |_, _| 1.0)
    }

    /// Independent reference: explicit (x, y, I) list, moments summed in f64
    /// from the definition, no shared helpers.
    fn oracle_raw(r: &Raster, p: i32, q: i32) -> f64 {
        let mut s = 0.0;
        for (idx, &v) in r.intensities.iter().enumerate() {
            let x = (idx % r.width) as f64;
            let y = (idx / r.width) as f64;
            s += x.powi(p) * y.powi(q) * v;
        }
        s
    }

    #[test]
    fn single_pixel_at_origin() {
        let r = ones(1, 1);
        assert_eq!(raw_moment(&r, 0, 0), 1.0);
        assert_eq!(raw_moment(&r, 1, 0), 0.0);
    }

    #[test]
    fn three_by_three() {
        let r = ones(3, 3);
        assert_eq!(raw_moment(&r, 0, 0), 9.0);
        assert_eq!(raw_moment(&r, 1, 0), 9.0);
        assert_eq!(raw_moment(&r, 0, 0), oracle_raw(&r, 0, 0));
    }

    #[test]
    fn linear_in_intensity() {
        let r = Raster::from_fn(4, 3, |x, y| ((x * 7 + y * 3) % 5) as f64 / 5.0);
        let scaled = Raster {
            intensities: r.intensities.iter().map(|v| v * 0.5).collect(),
            ..r.clone()
        };
        for (p, q) in [(0, 0), (1, 0), (0, 1), (2, 1)] {
            assert!((raw_moment(&scaled, p, q) - 0.5 * raw_moment(&r, p, q)).abs() < 1e-12);
        }
    }

    #[test]
    fn wide_rectangle_central_moments() {
        // 5 wide, 3 tall: μ20 = 3·Σ(x−2)² = 3·10 = 30, μ02 = 5·Σ(y−1)² = 5·2 = 10
        let m = central_moments(&ones(5, 3)).unwrap();
        assert!((m.central[2][0] - 30.0).abs() < 1e-12);
        assert!((m.central[0][2] - 10.0).abs() < 1e-12);
        assert!(m.central[1][0].abs() < 1e-9 && m.central[0][1].abs() < 1e-9);
        assert_eq!(orientation(&ones(5, 3)).unwrap(), 0.0);
    }

    #[test]
    fn tall_rectangle_is_vertical() {
        let theta = orientation(&ones(3, 5)).unwrap();
        assert!((theta.abs() - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn symmetric_square_has_zero_mu11() {
        let mut r = Raster::zeros(6, 6);
        for y in 1..5 {
            for x in 1..5 {
                r.set(x, y, 1.0);
            }
        }
        let m = central_moments(&r).unwrap();
        assert_eq!(m.central[1][1], 0.0);
        assert!(matches!(orientation(&r), Err(Error::OrientationUndefined)));
        assert_eq!(infer_direction(&r), Heading::NonCardinal);
    }

    #[test]
    fn diagonal_line_is_quarter_turn() {
        let r = Raster::from_fn(7, 7, |x, y| if x == y { 1.0 } else { 0.0 });
        assert!((orientation(&r).unwrap() - FRAC_PI_4).abs() < 1e-6);
    }

    #[test]
    fn translation_invariance() {
        let blob = |dx: usize, dy: usize| {
            Raster::from_fn(12, 12, |x, y| {
                if (dx..dx + 4).contains(&x) && (dy..dy + 2).contains(&y) {
                    0.25 + ((x - dx) as f64) * 0.1
                } else {
                    0.0
                }
            })
        };
        let a = central_moments(&blob(1, 2)).unwrap();
        let b = central_moments(&blob(6, 7)).unwrap();
        for p in 0..3 {
            for q in 0..3 - p {
                assert!((a.central[p][q] - b.central[p][q]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn empty_blob_is_an_error() {
        assert!(matches!(central_moments(&Raster::zeros(3, 3)), Err(Error::EmptyBlob)));
    }

    #[test]
    fn glyph_headings() {
        for c in [8, 12, 16, 21] {
            let right = render_player_glyph(c, 0.0).unwrap();
            assert_eq!(infer_direction(&right), Heading::Cardinal(Direction::Right));
            let left = Raster::from_fn(c, c, |x, y| right.get(c - 1 - x, y));
            assert_eq!(infer_direction(&left), Heading::Cardinal(Direction::Left));
            let rotated = render_player_glyph(c, PI / 6.0).unwrap();
            assert_eq!(infer_direction(&rotated), Heading::NonCardinal);
        }
    }

    #[test]
    fn thirty_degree_glyph_orientation() {
        let rotated = render_player_glyph(32, PI / 6.0).unwrap();
        let theta = orientation(&rotated).unwrap();
        assert!(theta > CARDINAL_TOLERANCE && theta < FRAC_PI_2 - CARDINAL_TOLERANCE);
    }
}
