//! Independent reference computations shared by the integration tests and
//! the acceptance run.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tactile_gesture::augment::{augment_dataset, bounding_box, BoundingBox};
use tactile_gesture::classical::svm::smo_binary;
use tactile_gesture::classical::{knn_fit, svm_fit, KnnConfig, SvmConfig};
use tactile_gesture::features::{band_stats, haar_dwt};
use tactile_gesture::types::{Frame, Recording, GRID, TAXELS};

/// The three-level orthonormal Haar analysis matrix, rows ordered
/// d1 (32), d2 (16), d3 (8), a3 (8).
pub fn haar_matrix() -> Vec<[f64; 64]> {
    let mut rows = Vec::with_capacity(64);
    for (width, count) in [(2usize, 32usize), (4, 16), (8, 8)] {
        let h = 1.0 / (width as f64).sqrt();
        for k in 0..count {
            let mut r = [0.0; 64];
            for i in 0..width {
                r[k * width + i] = if i < width / 2 { h } else { -h };
            }
            rows.push(r);
        }
    }
    let h = 1.0 / 8f64.sqrt();
    for k in 0..8 {
        let mut r = [0.0; 64];
        r[k * 8..k * 8 + 8].fill(h);
        rows.push(r);
    }
    rows
}

/// Largest of `|W W^T - I|` and `|W x - dwt(x)|` over random series.
pub fn haar_error(trials: usize, seed: u64) -> f64 {
    let w = haar_matrix();
    let mut worst: f64 = 0.0;
    for i in 0..64 {
        for j in 0..64 {
            let dot: f64 = (0..64).map(|k| w[i][k] * w[j][k]).sum();
            worst = worst.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let x: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bands = haar_dwt(&x).unwrap();
        let flat: Vec<f64> = bands.bands().concat();
        for (row, got) in w.iter().zip(&flat) {
            let want: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
            worst = worst.max((want - got).abs());
        }
    }
    worst
}

/// `[L1, L2, skew, excess kurtosis, std]` from raw moments.
pub fn moments_reference(v: &[f64]) -> [f64; 5] {
    let n = v.len() as f64;
    let raw = |k: i32| v.iter().map(|x| x.powi(k)).sum::<f64>() / n;
    let (e1, e2, e3, e4) = (raw(1), raw(2), raw(3), raw(4));
    let mu2 = e2 - e1 * e1;
    let mu3 = e3 - 3.0 * e1 * e2 + 2.0 * e1.powi(3);
    let mu4 = e4 - 4.0 * e1 * e3 + 6.0 * e1 * e1 * e2 - 3.0 * e1.powi(4);
    [
        v.iter().map(|x| x.abs()).sum(),
        (e2 * n).sqrt(),
        mu3 / mu2.powf(1.5),
        mu4 / (mu2 * mu2) - 3.0,
        mu2.sqrt(),
    ]
}

/// Largest relative deviation of `band_stats` from the raw-moment formulas
/// over random bands of the four Haar band lengths.
pub fn band_stats_error(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let len = [32, 16, 8, 8][t % 4];
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = band_stats(&v);
        let want = moments_reference(&v);
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs() / w.abs().max(1.0));
        }
    }
    worst
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sort-everything nearest neighbours with the documented vote rule:
/// majority, then smaller mean distance, then lower class id.
pub fn knn_reference(x: &[Vec<f64>], y: &[usize], k: usize, q: &[f64]) -> usize {
    let mut d: Vec<(f64, usize)> = x.iter().enumerate().map(|(i, r)| (sq_dist(r, q).sqrt(), i)).collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut votes = [0usize; 16];
    let mut dist = [0.0f64; 16];
    for &(di, i) in &d[..k] {
        votes[y[i]] += 1;
        dist[y[i]] += di;
    }
    let mut best = 0;
    for c in 1..16 {
        let mean = |c: usize| dist[c] / votes[c] as f64;
        if votes[c] > votes[best] || (votes[c] == votes[best] && votes[c] > 0 && mean(c) < mean(best)) {
            best = c;
        }
    }
    best
}

/// Number of KNN predictions differing from the reference.
pub fn knn_mismatches(seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for k in [1, 3, 4, 7] {
        let x: Vec<Vec<f64>> = (0..120).map(|_| (0..6).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<usize> = (0..120).map(|_| rng.random_range(0..4)).collect();
        let model = knn_fit(&x, &y, KnnConfig { k }).unwrap();
        for _ in 0..200 {
            let q: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            if model.predict(&q).unwrap() != knn_reference(&x, &y, k, &q) {
                bad += 1;
            }
        }
    }
    bad
}

/// Two checks of SVM decision values against plain kernel sums:
/// the SMO error cache against `sum_j a_j y_j K(x_j, x_i) + b`, and a
/// trained multiclass model against sums over its support vectors.
pub fn svm_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = 0.5;
    let n = 80;
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let yb: Vec<f64> = x.iter().map(|r| if r[0] + 0.3 * r[1] > 0.0 { 1.0 } else { -1.0 }).collect();
    let kernel: Vec<f64> = (0..n * n)
        .map(|ij| (-gamma * sq_dist(&x[ij / n], &x[ij % n])).exp())
        .collect();
    let sol = smo_binary(&kernel, &yb, 1.0, 1e-3, 20, 100_000, &mut ChaCha8Rng::seed_from_u64(seed));
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let f: f64 = (0..n)
            .map(|j| sol.alpha[j] * yb[j] * (-gamma * sq_dist(&x[j], &x[i])).exp())
            .sum::<f64>()
            + sol.b;
        worst = worst.max((f - (sol.errors[i] + yb[i])).abs());
    }

    let y: Vec<usize> = x
        .iter()
        .map(|r| usize::from(r[0] > 0.0) + 2 * usize::from(r[1] > 0.0))
        .collect();
    let model = svm_fit(&x, &y, SvmConfig::new(4.0, gamma)).unwrap();
    for _ in 0..50 {
        let q: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = model.decision_values(&q).unwrap();
        for (m, g) in model.machines.iter().zip(got) {
            let want: f64 = m
                .sv
                .iter()
                .zip(&m.coef)
                .map(|(s, a)| a * (-gamma * sq_dist(&model.pool[*s], &q)).exp())
                .sum::<f64>()
                + m.b;
            worst = worst.max((g - want).abs());
        }
    }
    worst
}

/// Translate by enumeration: every cell moves by (dx, dy), or `None` when
/// an above-threshold taxel would leave the grid.
pub fn translate(rec: &Recording, dx: i32, dy: i32, threshold: f64) -> Option<Vec<[f64; TAXELS]>> {
    let g = GRID as i32;
    let mut out = Vec::new();
    for f in &rec.frames {
        let mut p = [0.0; TAXELS];
        for r in 0..g {
            for c in 0..g {
                let v = f.pressures[(r * g + c) as usize];
                let (r2, c2) = (r + dy, c + dx);
                if (0..g).contains(&r2) && (0..g).contains(&c2) {
                    p[(r2 * g + c2) as usize] = v;
                } else if v > threshold {
                    return None;
                }
            }
        }
        out.push(p);
    }
    Some(out)
}

/// Compares `augment_dataset` with a search over all 17 x 17 translations:
/// the copies must be exactly the largest valid shift along each axis
/// direction, in the order right, left, up, down. Returns mismatch count.
pub fn augment_mismatches(recs: &[Recording], threshold: f64) -> usize {
    let mut bad = 0;
    for rec in recs {
        let out = augment_dataset(std::slice::from_ref(rec), threshold).recordings;
        if bounding_box(rec, threshold).is_err() {
            bad += usize::from(!out.is_empty());
            continue;
        }
        let mut want: Vec<Vec<[f64; TAXELS]>> = vec![rec.frames.iter().map(|f| f.pressures).collect()];
        let valid: Vec<(i32, i32)> = (-8..=8)
            .flat_map(|dx| (-8..=8).map(move |dy| (dx, dy)))
            .filter(|&(dx, dy)| translate(rec, dx, dy, threshold).is_some())
            .collect();
        let axis = |dir: (i32, i32)| {
            valid
                .iter()
                .filter(|&&(dx, dy)| dx * dir.1 == 0 && dy * dir.0 == 0 && dx * dir.0 + dy * dir.1 > 0)
                .max_by_key(|&&(dx, dy)| dx.abs() + dy.abs())
                .copied()
        };
        for dir in [(1, 0), (-1, 0), (0, -1), (0, 1)] {
            if let Some((dx, dy)) = axis(dir) {
                want.push(translate(rec, dx, dy, threshold).unwrap());
            }
        }
        let got: Vec<Vec<[f64; TAXELS]>> = out
            .iter()
            .map(|r| r.frames.iter().map(|f| f.pressures).collect())
            .collect();
        if got != want {
            bad += 1;
        }
    }
    bad
}

/// Box of an augmented copy must touch the edge its suffix names.
pub fn touches_edge(b: &BoundingBox, suffix: char) -> bool {
    match suffix {
        'r' => b.x_br == GRID - 1,
        'l' => b.x_tl == 0,
        'u' => b.y_tl == 0,
        'd' => b.y_br == GRID - 1,
        _ => false,
    }
}

/// Algorithm 1 post-conditions over a corpus; returns a description of the
/// first violation.
pub fn algorithm1_violation(recs: &[Recording], threshold: f64) -> Option<String> {
    let out = augment_dataset(recs, threshold).recordings;
    let mut i = 0;
    for rec in recs {
        let group: Vec<&Recording> = out[i..].iter().take_while(|r| r.id == rec.id || r.id.starts_with(&format!("{}+", rec.id))).collect();
        i += group.len();
        let Ok(bx) = bounding_box(rec, threshold) else {
            if !group.is_empty() {
                return Some(format!("{}: silent recording augmented", rec.id));
            }
            continue;
        };
        if !(1..=5).contains(&group.len()) {
            return Some(format!("{}: {} outputs", rec.id, group.len()));
        }
        let mut mass = active_values(rec, threshold);
        mass.sort_by(f64::total_cmp);
        for copy in &group[1..] {
            if copy.label != rec.label || copy.frames.len() != rec.frames.len() || copy.true_len != rec.true_len {
                return Some(format!("{}: label or length changed", copy.id));
            }
            let mut m = active_values(copy, threshold);
            m.sort_by(f64::total_cmp);
            if m != mass {
                return Some(format!("{}: active pressures changed", copy.id));
            }
            let cb = bounding_box(copy, threshold).unwrap();
            let suffix = copy.id.rsplit('+').next().unwrap().chars().next().unwrap();
            if !touches_edge(&cb, suffix)
                || cb.x_br - cb.x_tl != bx.x_br - bx.x_tl
                || cb.y_br - cb.y_tl != bx.y_br - bx.y_tl
            {
                return Some(format!("{}: box {cb:?} from {bx:?}", copy.id));
            }
        }
    }
    if i != out.len() {
        return Some("unattributed outputs".into());
    }
    None
}

fn active_values(r: &Recording, threshold: f64) -> Vec<f64> {
    r.frames
        .iter()
        .flat_map(|f| f.pressures)
        .filter(|p| *p > threshold)
        .collect()
}

/// A recording with a few random blobs of pressure, for property tests.
pub fn random_recording(rng: &mut ChaCha8Rng, id: &str) -> Recording {
    let len = rng.random_range(1..12);
    let frames: Vec<Frame> = (0..len)
        .map(|t| {
            let mut f = Frame::zeros(t as u64 * 67);
            for _ in 0..rng.random_range(0..6) {
                f.pressures[rng.random_range(0..TAXELS)] = rng.random_range(0.0..1.0);
            }
            f
        })
        .collect();
    let mut r = Recording::unlabeled(id, frames, 15.0).unwrap();
    r.label = Some(tactile_gesture::GestureClass::ALL[rng.random_range(0..10)]);
    r
}

/// Encode/parse round trips over random frames whose pressures are exact
/// `f32` values; returns the number of frames that came back different.
pub fn osc_round_trip_failures(n: usize, seed: u64) -> usize {
    use tactile_gesture::osc::{encode_osc_bundle, encode_osc_frame, parse_osc_packet};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for i in 0..n {
        let mut f = Frame::zeros(0);
        for p in f.pressures.iter_mut() {
            *p = f64::from(rng.random::<f32>());
        }
        let parsed = if i % 2 == 0 {
            parse_osc_packet(&encode_osc_frame(&f)).map(|c| c.frames)
        } else {
            let tag = rng.random_range(2..u64::MAX);
            parse_osc_packet(&encode_osc_bundle(&[f], tag)).map(|c| {
                if c.frames.iter().any(|p| p.timetag != Some(tag)) {
                    Vec::new()
                } else {
                    c.frames
                }
            })
        };
        match parsed {
            Ok(frames) if frames.len() == 1 && frames[0].frame.pressures == f.pressures => {}
            _ => bad += 1,
        }
    }
    bad
}

/// Feeds mutated packets to the parser. Returns `(panics, accepted)`;
/// accepted packets must only yield finite, nonnegative pressures.
pub fn osc_fuzz(n: usize, seed: u64) -> (usize, usize) {
    use tactile_gesture::osc::{encode_osc_bundle, encode_osc_frame, parse_osc_packet};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = Frame::zeros(0);
    f.pressures[40] = 0.5;
    let message = encode_osc_frame(&f);
    let bundle = encode_osc_bundle(&[f, f], 1 << 32);
    let mut nested = b"#bundle\0".to_vec();
    nested.extend_from_slice(&7u64.to_be_bytes());
    nested.extend_from_slice(&(bundle.len() as i32).to_be_bytes());
    nested.extend_from_slice(&bundle);
    let bases = [message, bundle, nested];
    let (mut panics, mut accepted) = (0, 0);
    for _ in 0..n {
        let mut p = bases[rng.random_range(0..bases.len())].clone();
        for _ in 0..rng.random_range(1..5) {
            match rng.random_range(0..5) {
                0 if !p.is_empty() => {
                    let i = rng.random_range(0..p.len());
                    p[i] ^= 1 << rng.random_range(0..8);
                }
                1 if !p.is_empty() => {
                    let i = rng.random_range(0..p.len());
                    p[i] = rng.random();
                }
                2 => p.truncate(rng.random_range(0..=p.len())),
                3 => {
                    let i = rng.random_range(0..=p.len());
                    let extra: Vec<u8> = (0..rng.random_range(1..9)).map(|_| rng.random()).collect();
                    p.splice(i..i, extra);
                }
                _ if p.len() >= 8 => {
                    // overwrite a bundle size field candidate with an extreme
                    let i = rng.random_range(0..p.len() - 3) & !3;
                    let v = [i32::MIN, -1, 0, i32::MAX, 3, 424][rng.random_range(0..6)];
                    p[i..i + 4].copy_from_slice(&v.to_be_bytes());
                }
                _ => {}
            }
        }
        match std::panic::catch_unwind(|| parse_osc_packet(&p)) {
            Err(_) => panics += 1,
            Ok(Ok(c)) => {
                accepted += 1;
                let sane = c
                    .frames
                    .iter()
                    .all(|pf| pf.frame.pressures.iter().all(|v| v.is_finite() && *v >= 0.0));
                if !sane {
                    panics += 1;
                }
            }
            Ok(Err(_)) => {}
        }
    }
    (panics, accepted)
}

/// The frame used for golden vectors: taxel `i` holds `i / 128`.
pub fn golden_frame() -> Frame {
    let mut f = Frame::zeros(0);
    for (i, p) in f.pressures.iter_mut().enumerate() {
        *p = i as f64 / 128.0;
    }
    f
}

/// Expected bytes of the golden frame message, assembled field by field.
pub fn golden_message_bytes() -> Vec<u8> {
    let mut b = b"/texyz/frame\0\0\0\0".to_vec();
    b.push(b',');
    b.extend(std::iter::repeat_n(b'f', TAXELS));
    b.extend_from_slice(&[0, 0]);
    for i in 0..TAXELS {
        b.extend_from_slice(&(i as f32 / 128.0).to_be_bytes());
    }
    b
}

/// Checks encoder output against hand-assembled bytes and pinned digests.
pub fn osc_golden() -> Result<(), String> {
    use tactile_gesture::model_file::sha256_hex;
    use tactile_gesture::osc::{encode_osc_bundle, encode_osc_frame};
    let f = golden_frame();
    let msg = encode_osc_frame(&f);
    if msg != golden_message_bytes() {
        return Err("message bytes differ from hand-assembled packet".into());
    }
    let mut bundle = b"#bundle\0".to_vec();
    bundle.extend_from_slice(&0x0000_0001_8000_0000u64.to_be_bytes());
    for _ in 0..2 {
        bundle.extend_from_slice(&(msg.len() as i32).to_be_bytes());
        bundle.extend_from_slice(&msg);
    }
    if encode_osc_bundle(&[f, f], 0x0000_0001_8000_0000) != bundle {
        return Err("bundle bytes differ from hand-assembled packet".into());
    }
    let pinned = [
        (sha256_hex(&msg), GOLDEN_MESSAGE_SHA256),
        (sha256_hex(&bundle), GOLDEN_BUNDLE_SHA256),
    ];
    for (got, want) in pinned {
        if got != want {
            return Err(format!("digest {got} != pinned {want}"));
        }
    }
    Ok(())
}

pub const GOLDEN_MESSAGE_SHA256: &str = "c4cb0b1c9156f690e5bff3149b37b71f251cb40b094e1850f6db9af3cda428e8";
pub const GOLDEN_BUNDLE_SHA256: &str = "7150b5ec58a1bb1c047c5386a3cffc1639f1c01ca3e07f7a98a749e59fbd1414";
