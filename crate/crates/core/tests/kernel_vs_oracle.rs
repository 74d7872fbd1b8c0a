use hybrid_rdme::micro::kernel::{contact_survival, PairKernel};
use hybrid_rdme::oracle::pde::{pde_solve, pde_survival, PdeOptions};
use hybrid_rdme::rng::replica_rng;

fn log_times(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

#[test]
fn contact_survival_matches_radial_solver() {
    let times = log_times(1e-7, 1e-2, 40);
    for k_a in [0.1, 1.0, 10.0] {
        let pde = pde_survival(0.005, 0.005, k_a, 2.0, &times).unwrap();
        let dev = times
            .iter()
            .zip(&pde)
            .map(|(&t, &s)| (contact_survival(k_a, 2.0, 0.005, t) - s).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-3, "k_a = {k_a}: max deviation {dev:e}");
    }
}

#[test]
fn off_contact_survival_matches_radial_solver() {
    let times = log_times(1e-6, 1e-2, 20);
    for r0 in [0.0055, 0.0075, 0.015] {
        let k = PairKernel::new(0.005, 2.0, 1.0);
        let pde = pde_survival(r0, 0.005, 1.0, 2.0, &times).unwrap();
        for (&t, &s) in times.iter().zip(&pde) {
            assert!((k.survival(r0, t) - s).abs() < 1e-3, "r0={r0} t={t}");
        }
    }
}

#[test]
fn conditional_separation_matches_radial_solver() {
    let (sigma, d, k_a) = (0.005, 2.0, 1.0);
    let kernel = PairKernel::new(sigma, d, k_a);
    let mut rng = replica_rng(2024, 0);
    for &(r0, t) in &[(sigma, 1e-6), (1.4 * sigma, 4e-6), (sigma, 1e-5)] {
        let (grid, snaps) = pde_solve(r0, sigma, k_a, d, &[t], &PdeOptions::default()).unwrap();
        let snap = &snaps[0];
        let width = (4.0 * d * t).sqrt();
        let lo = sigma;
        let hi = r0 + 5.0 * width;
        let bins = 20;
        let bw = (hi - lo) / bins as f64;

        // oracle: shell masses split across bins by overlap, normalized by survival
        let mut oracle = vec![0.0; bins];
        for (i, m) in snap.shell_mass.iter().enumerate() {
            let (a, b) = (grid.faces[i], grid.faces[i + 1]);
            for (k, o) in oracle.iter_mut().enumerate() {
                let (x0, x1) = (lo + k as f64 * bw, lo + (k + 1) as f64 * bw);
                let overlap = (b.min(x1) - a.max(x0)).max(0.0);
                *o += m / snap.survival * overlap / (b - a);
            }
        }
        let n = 100_000;
        let mut hist = vec![0.0; bins];
        for _ in 0..n {
            let r = kernel.sample_separation(r0, t, &mut rng);
            let b = ((r - lo) / bw).floor() as usize;
            if b < bins {
                hist[b] += 1.0 / n as f64;
            }
        }
        let l1: f64 = hist.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 < 0.02, "r0={r0} t={t}: L1 = {l1}");
    }
}
