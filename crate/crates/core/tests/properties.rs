use gaitkit_core::eval::{dir_at_far, rank_n, DistanceMatrix};
use gaitkit_core::model::{ppm_partition, PpmVariant};
use gaitkit_core::sampling::{random_frames, random_tracklets, ClipStructure};
use gaitkit_core::training::{batch_all_triplet, TripletConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn oracle_triplet(x: &[f64], labels: &[u8], patches: usize, dim: usize, cfg: TripletConfig) -> f64 {
    let n = labels.len();
    let d = |a: usize, b: usize, p: usize| -> f64 {
        let (ia, ib) = ((a * patches + p) * dim, (b * patches + p) * dim);
        (0..dim).map(|k| (x[ia + k] - x[ib + k]).powi(2)).sum::<f64>().sqrt()
    };
    let mut total = 0.0;
    for p in 0..patches {
        let (mut sum, mut all, mut active) = (0.0, 0usize, 0usize);
        for a in 0..n {
            for q in 0..n {
                if q == a || labels[q] != labels[a] {
                    continue;
                }
                for r in (0..n).filter(|&r| labels[r] != labels[a]) {
                    let h = cfg.margin + d(a, q, p) - d(a, r, p);
                    all += 1;
                    if h > 0.0 {
                        sum += h;
                        active += 1;
                    }
                }
            }
        }
        let count = if cfg.average_nonzero { active } else { all };
        if count > 0 {
            total += sum / count as f64;
        }
    }
    total / patches as f64
}

fn matrix(values: Vec<f64>, probes: &[u8], gallery: &[u8]) -> DistanceMatrix {
    let ids = |v: &[u8]| v.iter().map(|i| i.to_string()).collect();
    DistanceMatrix::new(values, ids(probes), ids(gallery)).unwrap()
}

/// Probe hit at rank `n` by sorting each row with ties broken by gallery index.
fn oracle_rank(values: &[f64], probes: &[u8], gallery: &[u8], n: usize) -> f64 {
    let g = gallery.len();
    let hits = probes
        .iter()
        .enumerate()
        .filter(|&(i, id)| {
            let mut order: Vec<usize> = (0..g).collect();
            order.sort_by(|&a, &b| values[i * g + a].total_cmp(&values[i * g + b]).then(a.cmp(&b)));
            order.iter().take(n).any(|&j| gallery[j] == *id)
        })
        .count();
    100.0 * hits as f64 / probes.len() as f64
}

/// Gallery holds every identity in `0..ids`; probes draw from the same set.
fn closed_set() -> impl Strategy<Value = (Vec<f64>, Vec<u8>, Vec<u8>)> {
    (1u8..5, 1usize..9, 0usize..4).prop_flat_map(|(ids, probes, extra)| {
        let gallery: Vec<u8> = (0..ids).chain((0..extra as u8).map(move |i| i % ids)).collect();
        let g = gallery.len();
        (
            prop::collection::vec(0u8..4, probes).prop_map(|v| v.into_iter().map(|i| i % 4).collect::<Vec<_>>()),
            Just(gallery),
            prop::collection::vec(0u32..6, probes * g),
        )
            .prop_map(move |(p, gallery, raw)| {
                let p: Vec<u8> = p.into_iter().map(|i| i % ids).collect();
                (raw.into_iter().map(f64::from).collect(), p, gallery)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn sampled_indices_stay_in_range(n in 1usize..200, u in 1usize..6, l in 1usize..9, s in 1usize..8, strict: bool, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clip = random_tracklets(n, u, l, s, strict, &mut rng).unwrap();
        prop_assert_eq!(clip.indices.len(), u * l);
        prop_assert!(clip.indices.iter().all(|&i| (1..=n).contains(&i)));
        if n > (l - 1) * s {
            prop_assert_eq!(clip.structure, ClipStructure::Tracklets { u, l, step: s, cyclic: false });
            for t in clip.indices.chunks(l) {
                prop_assert!(t.windows(2).all(|w| w[1] == w[0] + s));
            }
        }
        let frames = random_frames(n, u * l, &mut rng).unwrap();
        prop_assert!(frames.indices.iter().all(|&i| (1..=n).contains(&i)));
    }

    #[test]
    fn sampling_is_reproducible(n in 1usize..100, u in 1usize..5, l in 1usize..6, s in 1usize..5, seed: u64) {
        let draw = || random_tracklets(n, u, l, s, false, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(draw(), draw());
    }

    #[test]
    fn ppm_options_tile_the_map(a in 0u32..4, b in 0u32..4, k in 1usize..4, ppm: bool) {
        let (lu, lv) = (a as usize + 1, b as usize + 1);
        let (h, w) = (k << (a + b), k << (a + b));
        let variant = if ppm { PpmVariant::Ppm } else { PpmVariant::PpmV };
        let patches = ppm_partition(h, w, lu, lv, variant).unwrap();
        prop_assert_eq!(patches.len(), ((1 << lu) - 1) * ((1 << lv) - 1));
        for u in 1..=lu {
            for v in 1..=lv {
                let mut cover = vec![0u8; h * w];
                for p in patches.iter().filter(|p| p.option == (u, v)) {
                    for r in p.rows.clone() {
                        for c in p.cols.clone() {
                            cover[r * w + c] += 1;
                        }
                    }
                }
                prop_assert!(cover.iter().all(|&c| c == 1), "option ({}, {})", u, v);
            }
        }
    }

    #[test]
    fn triplet_matches_enumeration(
        labels in prop::collection::vec(0u8..4, 2..12),
        patches in 1usize..3,
        dim in 1usize..4,
        seed: u64,
        average_nonzero: bool,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..labels.len() * patches * dim).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let cfg = TripletConfig { margin: 0.2, average_nonzero };
        let got = batch_all_triplet(&x, &labels, patches, dim, cfg).loss;
        prop_assert!((got - oracle_triplet(&x, &labels, patches, dim, cfg)).abs() < 1e-9);

        let n = labels.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.reverse();
        order.rotate_left(seed as usize % n);
        let stride = patches * dim;
        let xs: Vec<f64> = order.iter().flat_map(|&i| x[i * stride..(i + 1) * stride].iter().copied()).collect();
        let ls: Vec<u8> = order.iter().map(|&i| labels[i]).collect();
        prop_assert!((batch_all_triplet(&xs, &ls, patches, dim, cfg).loss - got).abs() < 1e-9);
        let renamed: Vec<u8> = labels.iter().map(|l| 3 - l).collect();
        prop_assert!((batch_all_triplet(&x, &renamed, patches, dim, cfg).loss - got).abs() < 1e-12);
    }

    #[test]
    fn rank_matches_sort_oracle((values, probes, gallery) in closed_set(), scale in 0.01f64..100.0) {
        let dist = matrix(values.clone(), &probes, &gallery);
        let scaled = matrix(values.iter().map(|v| v * scale).collect(), &probes, &gallery);
        let mut last = 0.0;
        for n in 1..=gallery.len() {
            let r = rank_n(&dist, n).unwrap();
            prop_assert_eq!(r, oracle_rank(&values, &probes, &gallery, n));
            prop_assert_eq!(r, rank_n(&scaled, n).unwrap());
            prop_assert!(r >= last);
            last = r;
        }
        prop_assert_eq!(last, 100.0);
    }

    #[test]
    fn dir_is_monotone_and_scale_free(
        (values, probes, gallery) in closed_set(),
        flags in prop::collection::vec(any::<bool>(), 8),
        scale in 0.01f64..100.0,
    ) {
        let imposter: Vec<bool> = flags[..probes.len()].to_vec();
        prop_assume!(imposter.iter().any(|&f| f) && imposter.iter().any(|&f| !f));
        let genuine: Vec<usize> = (0..probes.len()).filter(|&i| !imposter[i]).collect();
        let levels = [0.0, 1.0, 5.0, 10.0, 25.0, 50.0, 75.0, 100.0];
        let dist = matrix(values.clone(), &probes, &gallery);
        let scaled = matrix(values.iter().map(|v| v * scale).collect(), &probes, &gallery);
        let points = dir_at_far(&dist, &imposter, &levels).unwrap();
        let scaled_points = dir_at_far(&scaled, &imposter, &levels).unwrap();
        prop_assert!(points.windows(2).all(|w| w[1].dir >= w[0].dir));
        for (a, b) in points.iter().zip(&scaled_points) {
            prop_assert_eq!(a.dir, b.dir);
        }
        let rank1 = rank_n(&dist.select_probes(&genuine), 1).unwrap();
        prop_assert_eq!(points.last().unwrap().dir, rank1);
    }
}
