//! Fills unestimated grid boxes of a [`StatField`] by scattered-data
//! interpolation in a scaled, periodic 4-coordinate space.
//!
//! Box centers are mapped to (time, lon, lat, depth) where one month spans
//! 360/months_per_year on the same scale as degrees of longitude and depth
//! uses the level index, so consecutive depth levels are one degree apart.
//! Data are replicated one period out along time and longitude, targets
//! inside the convex hull receive barycentric-linear values from the
//! containing simplex of a lifted-lower-hull triangulation, and everything
//! else falls back to the nearest replicated point.

mod kdtree;
mod lp;

use crate::error::{Error, Result};
use crate::grid::{BoxKey, GridSpec};
use crate::twoscale::{Provenance, StatField};
use kdtree::KdTree;
use rayon::prelude::*;

/// Scaled-space period of both the time axis (one year) and the longitude
/// axis, in degrees.
const PERIOD_DEG: f64 = 360.0;

/// Fewer points than this cannot span a 4-D simplex; interpolation then uses
/// nearest-neighbor for every target.
const MIN_SIMPLEX_POINTS: usize = 5;

/// Maps a grid box to the center of its cell in scaled coordinates
/// (time, lon, lat, depth-level).
pub fn scaled_point(key: &BoxKey, spec: &GridSpec) -> [f64; 4] {
    [
        (key.month_index as f64 + 0.5) * PERIOD_DEG / spec.months_per_year as f64,
        (key.lon_index as f64 + 0.5) * spec.lon_resolution_deg,
        -90.0 + (key.lat_index as f64 + 0.5) * spec.lat_resolution_deg,
        key.depth_index as f64,
    ]
}

/// Duplicates each scaled point at time ± one year and longitude ± 360°,
/// copying values; one replica per direction, so each point yields 9.
pub fn replicate_periodic(
    points: &[([f64; 4], f64)],
    _spec: &GridSpec,
) -> Vec<([f64; 4], f64)> {
    let mut out = Vec::with_capacity(points.len() * 9);
    for &(p, v) in points {
        for dt in [-1.0, 0.0, 1.0] {
            for dl in [-1.0, 0.0, 1.0] {
                out.push((
                    [p[0] + dt * PERIOD_DEG, p[1] + dl * PERIOD_DEG, p[2], p[3]],
                    v,
                ));
            }
        }
    }
    out
}

/// Fills `targets` by triangulated barycentric interpolation with
/// nearest-neighbor fallback. Boxes already present in `field` (estimated or
/// otherwise) are left untouched; filled boxes are marked interpolated.
pub fn interpolate_field(field: &StatField, targets: &[BoxKey]) -> Result<StatField> {
    if field.is_empty() {
        return Err(Error::Empty("interpolation input field".to_string()));
    }
    let spec = &field.spec;
    let data: Vec<([f64; 4], f64)> = field
        .iter()
        .map(|(k, v, _)| (scaled_point(k, spec), v))
        .collect();
    let replicated = replicate_periodic(&data, spec);
    let points: Vec<[f64; 4]> = replicated.iter().map(|&(p, _)| p).collect();
    let values: Vec<f64> = replicated.iter().map(|&(_, v)| v).collect();
    let tree = KdTree::build(&replicated);
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| {
            (lo.min(v), hi.max(v))
        });
    let triangulate = data.len() >= MIN_SIMPLEX_POINTS;

    let filled: Vec<(BoxKey, f64)> = targets
        .par_iter()
        .filter(|key| field.get(key).is_none())
        .map(|key| {
            let q = scaled_point(key, spec);
            let value = if triangulate {
                match lp::hull_weights(&points, &q) {
                    Some(w) => barycentric_value(&points, &values, &w, &q)
                        .unwrap_or_else(|| tree.nearest(&q).unwrap()),
                    None => tree.nearest(&q).unwrap(),
                }
            } else {
                tree.nearest(&q).unwrap()
            };
            // Convexity guard: exact arithmetic keeps the value inside the
            // data range; rounding must not let it escape.
            (*key, value.clamp(lo, hi))
        })
        .collect();

    let mut out = field.clone();
    for (key, value) in filled {
        out.insert(key, value, Provenance::Interpolated);
    }
    Ok(out)
}

/// Fills `targets` with the value of the nearest replicated point only,
/// skipping boxes already present; filled boxes are marked interpolated.
pub fn nearest_field(field: &StatField, targets: &[BoxKey]) -> Result<StatField> {
    if field.is_empty() {
        return Err(Error::Empty("interpolation input field".to_string()));
    }
    let spec = &field.spec;
    let data: Vec<([f64; 4], f64)> = field
        .iter()
        .map(|(k, v, _)| (scaled_point(k, spec), v))
        .collect();
    let tree = KdTree::build(&replicate_periodic(&data, spec));
    let mut out = field.clone();
    for key in targets {
        if out.get(key).is_none() {
            let value = tree.nearest(&scaled_point(key, spec)).unwrap();
            out.insert(*key, value, Provenance::Interpolated);
        }
    }
    Ok(out)
}

/// Fills every absent box of the grid with the global mean of the present
/// values, marked fallback_average. Present boxes are unchanged.
pub fn fallback_average(field: &StatField) -> Result<StatField> {
    let mean = field
        .global_mean()
        .ok_or(Error::Empty("fallback-average input field".to_string()))?;
    let spec = field.spec.clone();
    let mut out = field.clone();
    for lon_index in 0..spec.lon_bins() {
        for lat_index in 0..spec.lat_bins() {
            for depth_index in 0..spec.depth_bins() {
                for month_index in 0..spec.months_per_year {
                    let key = BoxKey { lon_index, lat_index, depth_index, month_index };
                    if out.get(&key).is_none() {
                        out.insert(key, mean, Provenance::FallbackAverage);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Re-solves the barycentric system on the simplex support found by the LP
/// and evaluates the interpolant. Weights are clamped nonnegative and
/// renormalized so the result is a genuine convex combination. Returns None
/// when the support system is numerically singular.
fn barycentric_value(
    points: &[[f64; 4]],
    values: &[f64],
    support: &[(usize, f64)],
    q: &[f64; 4],
) -> Option<f64> {
    let k = support.len();
    if k == 0 {
        return None;
    }
    // Rows: the 4 recentered coordinates plus the sum-to-one constraint;
    // right-hand side (0, 0, 0, 0, 1).
    let mut a = [[0.0f64; 5]; 5];
    for (col, &(j, _)) in support.iter().enumerate() {
        for d in 0..4 {
            a[d][col] = points[j][d] - q[d];
        }
        a[4][col] = 1.0;
    }
    let b = [0.0, 0.0, 0.0, 0.0, 1.0];
    let start: Vec<f64> = support.iter().map(|&(_, w)| w).collect();
    let w = refine_least_squares(&a, &b, k, &start)?;
    let mut total = 0.0;
    let mut acc = 0.0;
    for (col, &(j, _)) in support.iter().enumerate() {
        let wj = w[col].max(0.0);
        total += wj;
        acc += wj * values[j];
    }
    if total <= 0.0 {
        return None;
    }
    Some(acc / total)
}

/// One Newton correction of `w` for the consistent system A w = b
/// (5 rows, k <= 5 columns) via the normal equations of the residual.
fn refine_least_squares(a: &[[f64; 5]; 5], b: &[f64; 5], k: usize, w: &[f64]) -> Option<Vec<f64>> {
    let mut w = w.to_vec();
    for _ in 0..2 {
        let mut r = [0.0f64; 5];
        for i in 0..5 {
            let mut s = b[i];
            for (col, &wc) in w.iter().enumerate() {
                s -= a[i][col] * wc;
            }
            r[i] = s;
        }
        // Normal equations for the correction: (AᵀA) dw = Aᵀ r.
        let mut m = vec![vec![0.0f64; k + 1]; k];
        for row in 0..k {
            for col in 0..k {
                let mut s = 0.0;
                for i in 0..5 {
                    s += a[i][row] * a[i][col];
                }
                m[row][col] = s;
            }
            let mut s = 0.0;
            for i in 0..5 {
                s += a[i][row] * r[i];
            }
            m[row][k] = s;
        }
        let dw = solve_dense(&mut m, k)?;
        for (wc, d) in w.iter_mut().zip(&dw) {
            *wc += d;
        }
    }
    Some(w)
}

/// Gaussian elimination with partial pivoting on an augmented k x (k+1)
/// system; None when singular.
fn solve_dense(m: &mut [Vec<f64>], k: usize) -> Option<Vec<f64>> {
    for col in 0..k {
        let pivot_row = (col..k).max_by(|&a, &b| {
            m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap()
        })?;
        if m[pivot_row][col].abs() < 1e-13 {
            return None;
        }
        m.swap(col, pivot_row);
        for row in col + 1..k {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for j in col..=k {
                    let sub = f * m[col][j];
                    m[row][j] -= sub;
                }
            }
        }
    }
    let mut x = vec![0.0f64; k];
    for col in (0..k).rev() {
        let mut s = m[col][k];
        for j in col + 1..k {
            s -= m[col][j] * x[j];
        }
        x[col] = s / m[col][col];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twoscale::FieldKind;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_spec() -> GridSpec {
        GridSpec {
            lon_resolution_deg: 1.0,
            lat_resolution_deg: 1.0,
            depth_levels: vec![0.0, 10.0, 20.0, 30.0],
            months_per_year: 12,
            year_range: (1990, 2000),
        }
    }

    fn key(lon: u32, lat: u32, depth: u32, month: u32) -> BoxKey {
        BoxKey { lon_index: lon, lat_index: lat, depth_index: depth, month_index: month }
    }

    #[test]
    fn replication_produces_nine_copies_with_equal_values() {
        let spec = small_spec();
        let p = scaled_point(&key(3, 10, 1, 4), &spec);
        let out = replicate_periodic(&[(p, 7.25)], &spec);
        assert_eq!(out.len(), 9);
        assert!(out.iter().all(|&(_, v)| v == 7.25));
        let times: Vec<f64> = out.iter().map(|&(r, _)| r[0]).collect();
        assert!(times.contains(&(p[0] - 360.0)));
        assert!(times.contains(&(p[0] + 360.0)));
        assert!(out.iter().all(|&(r, _)| r[2] == p[2] && r[3] == p[3]));
        assert!(replicate_periodic(&[], &spec).is_empty());
    }

    #[test]
    fn empty_field_is_rejected() {
        let spec = small_spec();
        let field = StatField::new(spec, FieldKind::Mean);
        assert!(interpolate_field(&field, &[key(0, 0, 0, 0)]).is_err());
        assert!(fallback_average(&field).is_err());
    }

    #[test]
    fn single_point_gives_its_value_everywhere() {
        let spec = small_spec();
        let mut field = StatField::new(spec, FieldKind::Mean);
        field.insert(key(2, 50, 1, 6), 3.5, Provenance::Estimated);
        let targets = vec![key(0, 0, 0, 0), key(300, 179, 3, 11), key(2, 50, 2, 6)];
        let out = interpolate_field(&field, &targets).unwrap();
        for t in &targets {
            assert_eq!(out.get(t), Some(3.5));
            assert_eq!(out.provenance(t), Some(Provenance::Interpolated));
        }
    }

    #[test]
    fn nearest_fill_copies_the_closest_value() {
        let spec = small_spec();
        let mut field = StatField::new(spec.clone(), FieldKind::Mean);
        for lon in [0u32, 2, 4, 6, 8] {
            field.insert(key(lon, 90, 0, 6), lon as f64, Provenance::Estimated);
        }
        let out = nearest_field(&field, &[key(1, 90, 0, 6), key(7, 90, 0, 6)]).unwrap();
        // Ties at the midpoint break toward the lexicographically smaller
        // scaled point, i.e. the lower longitude.
        assert_eq!(out.get(&key(1, 90, 0, 6)), Some(0.0));
        assert_eq!(out.get(&key(7, 90, 0, 6)), Some(6.0));
        assert_eq!(out.provenance(&key(1, 90, 0, 6)), Some(Provenance::Interpolated));
        assert_eq!(out.get(&key(0, 90, 0, 6)), Some(0.0));
        assert_eq!(out.provenance(&key(0, 90, 0, 6)), Some(Provenance::Estimated));
    }

    fn affine_field_and_fn(
        spec: &GridSpec,
    ) -> (StatField, impl Fn(&[f64; 4]) -> f64 + Copy) {
        let affine =
            |p: &[f64; 4]| 2.0 + 0.1 * p[0] - 0.05 * p[1] + 0.2 * p[2] + 0.4 * p[3];
        let mut field = StatField::new(spec.clone(), FieldKind::Mean);
        for lon in (10..20).step_by(3) {
            for lat in (80..92).step_by(3) {
                for depth in [0u32, 3] {
                    for month in [2u32, 5, 8] {
                        let k = key(lon, lat, depth, month);
                        field.insert(k, affine(&scaled_point(&k, spec)), Provenance::Estimated);
                    }
                }
            }
        }
        (field, affine)
    }

    #[test]
    fn affine_function_is_reproduced_at_interior_targets() {
        let spec = small_spec();
        let (field, affine) = affine_field_and_fn(&spec);
        let mut targets = Vec::new();
        for lon in 11..19 {
            for lat in 82..90 {
                for depth in 1..3 {
                    for month in [3u32, 4, 6, 7] {
                        targets.push(key(lon, lat, depth, month));
                    }
                }
            }
        }
        let out = interpolate_field(&field, &targets).unwrap();
        for t in &targets {
            let expected = affine(&scaled_point(t, &spec));
            let got = out.get(t).unwrap();
            assert!(
                (got - expected).abs() < 1e-9,
                "target {t:?}: got {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn estimated_boxes_are_never_modified() {
        let spec = small_spec();
        let (field, _) = affine_field_and_fn(&spec);
        let estimated: Vec<BoxKey> = field.iter().map(|(k, _, _)| *k).collect();
        let out = interpolate_field(&field, &estimated).unwrap();
        for k in &estimated {
            assert_eq!(out.get(k), field.get(k));
            assert_eq!(out.provenance(k), Some(Provenance::Estimated));
        }
        let avg = fallback_average(&field).unwrap();
        for k in &estimated {
            assert_eq!(avg.get(k), field.get(k));
            assert_eq!(avg.provenance(k), Some(Provenance::Estimated));
        }
    }

    #[test]
    fn seam_interpolation_matches_brute_force_replica_search() {
        // Data only near lon index 0 on a 1-degree grid; a target at lon 359
        // is one degree away through the seam and must take the value of the
        // +360-degree replica rather than anything 359 degrees away.
        let spec = small_spec();
        let mut field = StatField::new(spec.clone(), FieldKind::Mean);
        field.insert(key(0, 90, 0, 6), 1.0, Provenance::Estimated);
        field.insert(key(5, 90, 0, 6), 2.0, Provenance::Estimated);
        let target = key(359, 90, 0, 6);
        let out = interpolate_field(&field, &[target]).unwrap();
        // Brute-force nearest over all replicas.
        let data: Vec<([f64; 4], f64)> = field
            .iter()
            .map(|(k, v, _)| (scaled_point(k, &spec), v))
            .collect();
        let q = scaled_point(&target, &spec);
        let brute = replicate_periodic(&data, &spec)
            .into_iter()
            .map(|(p, v)| {
                let d2: f64 = p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, p, v)
            })
            .min_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap()
                    .then_with(|| a.1.partial_cmp(&b.1).unwrap())
            })
            .unwrap()
            .2;
        assert_eq!(out.get(&target), Some(brute));
        assert_eq!(out.get(&target), Some(1.0));
    }

    #[test]
    fn seam_interpolation_is_continuous_with_triangulation() {
        // Enough points to triangulate; data straddling lon 0 via indices
        // near both ends must interpolate smoothly at lon 359.
        let spec = small_spec();
        let mut field = StatField::new(spec.clone(), FieldKind::Mean);
        for (lon, v) in [(0u32, 1.0), (2, 3.0)] {
            for lat in [89u32, 91] {
                for depth in [0u32, 2] {
                    for month in [4u32, 8] {
                        field.insert(key(lon, lat, depth, month), v, Provenance::Estimated);
                    }
                }
            }
        }
        let target = key(359, 90, 1, 6);
        let out = interpolate_field(&field, &[target]).unwrap();
        let got = out.get(&target).unwrap();
        // Along the lon axis the query (scaled 359.5) lies between the lon-2
        // data plane (2.5, value 3) and the +360-degree replica of the lon-0
        // plane (360.5, value 1): linearly, 3 - 2 * 357/358 = 180/179. A
        // non-periodic treatment would have fallen back to the nearest point
        // 357 degrees away and returned 3.
        assert_relative_eq!(got, 180.0 / 179.0, epsilon = 1e-9);
    }

    #[test]
    fn fallback_average_fills_all_absent_boxes_with_the_mean() {
        let spec = GridSpec {
            lon_resolution_deg: 120.0,
            lat_resolution_deg: 90.0,
            depth_levels: vec![0.0, 10.0],
            months_per_year: 2,
            year_range: (1990, 1991),
        };
        let mut field = StatField::new(spec.clone(), FieldKind::Mean);
        field.insert(key(0, 0, 0, 0), 1.0, Provenance::Estimated);
        field.insert(key(1, 1, 1, 1), 3.0, Provenance::Estimated);
        let out = fallback_average(&field).unwrap();
        let total = (spec.lon_bins() * spec.lat_bins() * spec.depth_bins()
            * spec.months_per_year) as usize;
        assert_eq!(out.len(), total);
        assert_eq!(out.get(&key(0, 0, 0, 0)), Some(1.0));
        assert_eq!(out.get(&key(2, 0, 1, 1)), Some(2.0));
        assert_eq!(out.provenance(&key(2, 0, 1, 1)), Some(Provenance::FallbackAverage));
        // With nothing absent the output equals the input.
        let again = fallback_average(&out).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn output_values_stay_within_the_input_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = small_spec();
        for _ in 0..5 {
            let mut field = StatField::new(spec.clone(), FieldKind::Mean);
            for _ in 0..40 {
                let k = key(
                    rng.gen_range(0..30),
                    rng.gen_range(60..120),
                    rng.gen_range(0..4),
                    rng.gen_range(0..12),
                );
                field.insert(k, rng.gen_range(-3.0..3.0), Provenance::Estimated);
            }
            let (lo, hi) = field
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v, _)| {
                    (lo.min(v), hi.max(v))
                });
            let targets: Vec<BoxKey> = (0..60)
                .map(|_| {
                    key(
                        rng.gen_range(0..360),
                        rng.gen_range(0..180),
                        rng.gen_range(0..4),
                        rng.gen_range(0..12),
                    )
                })
                .collect();
            let out = interpolate_field(&field, &targets).unwrap();
            for t in &targets {
                let v = out.get(t).unwrap();
                assert!(v >= lo && v <= hi, "value {v} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn translating_values_translates_the_output() {
        let spec = small_spec();
        let (field, _) = affine_field_and_fn(&spec);
        let mut shifted = StatField::new(spec.clone(), FieldKind::Mean);
        let k0 = 12.5;
        for (k, v, p) in field.iter() {
            shifted.insert(*k, v + k0, p);
        }
        let targets = vec![key(12, 84, 1, 4), key(15, 86, 2, 6), key(250, 30, 0, 0)];
        let a = interpolate_field(&field, &targets).unwrap();
        let b = interpolate_field(&shifted, &targets).unwrap();
        for t in &targets {
            assert_relative_eq!(
                a.get(t).unwrap() + k0,
                b.get(t).unwrap(),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn rotating_longitudes_by_a_full_period_preserves_the_output() {
        // Rotating every lon index by the same offset (mod 360 bins on a
        // 1-degree grid) shifts data and targets together around the
        // periodic axis; the interpolant must follow.
        let spec = small_spec();
        let (field, _) = affine_field_and_fn(&spec);
        let bins = spec.lon_bins();
        let shift = 200u32;
        let mut rotated = StatField::new(spec.clone(), FieldKind::Mean);
        for (k, v, p) in field.iter() {
            let mut k2 = *k;
            k2.lon_index = (k.lon_index + shift) % bins;
            rotated.insert(k2, v, p);
        }
        let targets = vec![key(12, 84, 1, 4), key(16, 88, 2, 7)];
        let a = interpolate_field(&field, &targets).unwrap();
        let b_targets: Vec<BoxKey> = targets
            .iter()
            .map(|t| {
                let mut t2 = *t;
                t2.lon_index = (t.lon_index + shift) % bins;
                t2
            })
            .collect();
        let b = interpolate_field(&rotated, &b_targets).unwrap();
        for (t, t2) in targets.iter().zip(&b_targets) {
            assert_relative_eq!(a.get(t).unwrap(), b.get(t2).unwrap(), epsilon = 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn interpolation_is_convex_and_keeps_sources(
            values in proptest::collection::vec(-100.0f64..100.0, 6..12),
            t_lon in 0u32..360,
            t_lat in 0u32..180,
        ) {
            let spec = small_spec();
            let mut field = StatField::new(spec.clone(), FieldKind::Mean);
            for (i, v) in values.iter().enumerate() {
                let k = key(
                    (i as u32 * 37) % 360,
                    30 + (i as u32 * 17) % 120,
                    (i as u32) % 4,
                    (i as u32 * 5) % 12,
                );
                field.insert(k, *v, Provenance::Estimated);
            }
            let before = field.clone();
            let target = key(t_lon, t_lat, 1, 3);
            let out = interpolate_field(&field, &[target]).unwrap();
            let (lo, hi) = before.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), (_, v, _)| (lo.min(v), hi.max(v)),
            );
            let v = out.get(&target).unwrap();
            prop_assert!(v >= lo && v <= hi);
            for (k, v0, p0) in before.iter() {
                prop_assert_eq!(out.get(k), Some(v0));
                prop_assert_eq!(out.provenance(k), Some(p0));
            }
        }
    }
}
