//! Acceptance suite: one test per release criterion, each printing a single
//! PASS line (run with `--nocapture` to see them). Every numerical check is
//! made against an oracle implemented here, independently of the library.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use s2hsi::cube::{read_cube, write_cube, BandPixelMatrix, HsiCube};
use s2hsi::discriminator::{
    disc_forward, disc_vjp, train_discriminator, DiscriminatorParams, TrainOptions,
};
use s2hsi::eval;
use s2hsi::operators::{
    apply_blur, apply_blur_adjoint, apply_srf, apply_srf_adjoint, build_gaussian_kernel,
    degradation_sigma, solver_blur_kernel, SrfMatrix,
};
use s2hsi::prior::estimate_spectral_prior;
use s2hsi::simulate::{
    remove_water_bands, simulate_sentinel2, spectral_downsample2, SentinelProduct, BAND_FACTORS,
};
use s2hsi::solver::{
    full_gradient, grad_g1, grad_g2, grad_g3, init_a, lagrangian, solve_from_su, update_t,
    SolverConfig,
};

// ---------------------------------------------------------------------------
// shared fixtures
// ---------------------------------------------------------------------------

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_array(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(0.0..1.0))
}

fn rand_bpm(bands: usize, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> BandPixelMatrix {
    BandPixelMatrix {
        values: rand_array(bands, rows * cols, rng),
        rows,
        cols,
    }
}

fn rand_cube(bands: usize, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> HsiCube {
    let data: Vec<f64> = (0..bands * rows * cols).map(|_| rng.gen_range(0.0..1.0)).collect();
    HsiCube::new(bands, rows, cols, data, None).unwrap()
}

/// Row-stochastic SRF with `msi` equal contiguous blocks over `hsi` bands.
fn block_srf(msi: usize, hsi: usize) -> SrfMatrix {
    assert_eq!(hsi % msi, 0);
    let width = hsi / msi;
    let mut values = Array2::zeros((msi, hsi));
    for r in 0..msi {
        for c in 0..width {
            values[[r, r * width + c]] = 1.0 / width as f64;
        }
    }
    SrfMatrix::new(values).unwrap()
}

fn rel_err(got: &Array2<f64>, want: &Array2<f64>) -> f64 {
    let num = (got - want).iter().map(|v| v * v).sum::<f64>().sqrt();
    let den = want.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-30);
    num / den
}

fn inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn fd_grad(f: impl Fn(&Array2<f64>) -> f64, x: &Array2<f64>, h: f64) -> Array2<f64> {
    let mut g = Array2::zeros(x.dim());
    let mut xp = x.clone();
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = xp[[r, c]];
        xp[[r, c]] = orig + h;
        let fp = f(&xp);
        xp[[r, c]] = orig - h;
        let fm = f(&xp);
        xp[[r, c]] = orig;
        g[[r, c]] = (fp - fm) / (2.0 * h);
    }
    g
}

fn pass(name: &str) {
    println!("[{name}] PASS");
}

// ---------------------------------------------------------------------------
// 01: operator adjoint identities
// ---------------------------------------------------------------------------

#[test]
fn acceptance_01_adjoint_identities() {
    let start = Instant::now();
    let mut r = rng(101);
    let kernel = solver_blur_kernel();
    let srf = block_srf(3, 9);
    for _ in 0..100 {
        let x = rand_bpm(4, 9, 9, &mut r);
        let y = rand_bpm(4, 9, 9, &mut r);
        let lhs = inner(&apply_blur(&x, &kernel).unwrap().values, &y.values);
        let rhs = inner(&x.values, &apply_blur_adjoint(&y, &kernel).unwrap().values);
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-30);
        assert!(rel <= 1e-10, "blur adjoint identity violated: rel {rel:.3e}");
    }
    for _ in 0..100 {
        let x = rand_bpm(9, 7, 7, &mut r);
        let y = rand_bpm(3, 7, 7, &mut r);
        let lhs = inner(&apply_srf(&srf, &x).unwrap().values, &y.values);
        let rhs = inner(&x.values, &apply_srf_adjoint(&srf, &y).unwrap().values);
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-30);
        assert!(rel <= 1e-10, "SRF adjoint identity violated: rel {rel:.3e}");
    }
    assert!(start.elapsed().as_secs_f64() < 5.0, "adjoint suite too slow");
    pass("01 adjoint-identities: 200 draws, rel err <= 1e-10");
}

// ---------------------------------------------------------------------------
// 02: gradient and VJP correctness against finite differences
// ---------------------------------------------------------------------------

#[test]
fn acceptance_02_gradients() {
    let start = Instant::now();
    let mut r = rng(202);
    let kernel = solver_blur_kernel();
    let srf = block_srf(2, 6);
    let (rows, cols) = (6, 6);
    let s_u = rand_bpm(2, rows, cols, &mut r);
    let a = rand_bpm(6, rows, cols, &mut r);

    // data-fitting gradient
    let g1 = grad_g1(&a, &s_u, &srf, &kernel).unwrap();
    let f1 = |x: &Array2<f64>| {
        let bx = BandPixelMatrix { values: x.clone(), rows, cols };
        let dab = apply_srf(&srf, &apply_blur(&bx, &kernel).unwrap()).unwrap();
        0.5 * (&dab.values - &s_u.values).iter().map(|v| v * v).sum::<f64>()
    };
    let fd1 = fd_grad(f1, &a.values, 1e-6);
    assert!(rel_err(&g1, &fd1) <= 1e-6, "G1 rel err {:.3e}", rel_err(&g1, &fd1));

    // spectrum-regularization gradient
    let prior_cube = rand_cube(6, rows, cols, &mut r);
    let p = estimate_spectral_prior(&[prior_cube], rows * cols).unwrap();
    let lambda2 = 0.5;
    let g2 = grad_g2(&a, &p, lambda2).unwrap();
    let f2 = |x: &Array2<f64>| {
        let gram = x.dot(&x.t());
        0.5 * lambda2 * (&gram - &p.matrix).iter().map(|v| v * v).sum::<f64>()
    };
    let fd2 = fd_grad(f2, &a.values, 1e-6);
    assert!(rel_err(&g2, &fd2) <= 1e-6, "G2 rel err {:.3e}", rel_err(&g2, &fd2));

    // penalty gradient through the discriminator
    let disc = DiscriminatorParams::seeded(4, 11);
    let ad = rand_bpm(4, rows, cols, &mut r);
    let t = rand_array(4, rows * cols, &mut r);
    let u = rand_array(4, rows * cols, &mut r);
    let mu = 5e-2;
    let g3 = grad_g3(&ad, &t, &u, mu, &disc).unwrap();
    let f3 = |x: &Array2<f64>| {
        let bx = BandPixelMatrix { values: x.clone(), rows, cols };
        let (out, _) = disc_forward(&disc, &bx).unwrap();
        0.5 * mu * (&out.values - &t - &u).iter().map(|v| v * v).sum::<f64>()
    };
    let fd3 = fd_grad(f3, &ad.values, 1e-5);
    assert!(rel_err(&g3, &fd3) <= 1e-4, "G3 rel err {:.3e}", rel_err(&g3, &fd3));

    // full gradient against the full objective
    let srf4 = block_srf(2, 4);
    let s_u4 = rand_bpm(2, rows, cols, &mut r);
    let p4 = estimate_spectral_prior(&[rand_cube(4, rows, cols, &mut r)], rows * cols).unwrap();
    let config = SolverConfig::default();
    let gf = full_gradient(&ad, &t, &u, &s_u4, &srf4, &kernel, Some(&p4), Some(&disc), &config)
        .unwrap();
    let ff = |x: &Array2<f64>| {
        let bx = BandPixelMatrix { values: x.clone(), rows, cols };
        lagrangian(&bx, &t, &u, &s_u4, &srf4, &kernel, Some(&p4), Some(&disc), &config)
            .unwrap()
            .total()
    };
    let fdf = fd_grad(ff, &ad.values, 1e-5);
    assert!(rel_err(&gf, &fdf) <= 1e-4, "full grad rel err {:.3e}", rel_err(&gf, &fdf));

    // VJP against a directional derivative of the forward map
    let (_, tape) = disc_forward(&disc, &ad).unwrap();
    for probe in 0..5 {
        let mut pr = rng(300 + probe);
        let v = rand_array(4, rows * cols, &mut pr);
        let w = rand_bpm(4, rows, cols, &mut pr);
        let h = 1e-6;
        let plus = BandPixelMatrix { values: &ad.values + &(&v * h), rows, cols };
        let minus = BandPixelMatrix { values: &ad.values - &(&v * h), rows, cols };
        let (op, _) = disc_forward(&disc, &plus).unwrap();
        let (om, _) = disc_forward(&disc, &minus).unwrap();
        let jv = (&op.values - &om.values) / (2.0 * h);
        let lhs = inner(&jv, &w.values);
        let rhs = inner(&v, &disc_vjp(&disc, &tape, &w).unwrap().values);
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-30);
        assert!(rel <= 1e-6, "VJP duality violated: rel {rel:.3e}");
    }
    assert!(start.elapsed().as_secs_f64() < 30.0, "gradient suite too slow");
    pass("02 gradients: G1/G2 <= 1e-6, G3/full <= 1e-4, VJP duality <= 1e-6");
}

// ---------------------------------------------------------------------------
// 03: closed-form T-update optimality
// ---------------------------------------------------------------------------

#[test]
fn acceptance_03_t_update_optimality() {
    let mut r = rng(303);
    let (lambda1, mu) = (5e-4, 5e-2);
    let disc_out = rand_array(4, 36, &mut r);
    let u = rand_array(4, 36, &mut r).mapv(|v| v - 0.5);
    let t_star = update_t(&disc_out, &u, lambda1, mu).unwrap();
    let objective = |t: &Array2<f64>| {
        let a = 0.5 * lambda1 * t.iter().map(|&v| (1.0 - v) * (1.0 - v)).sum::<f64>();
        let b = 0.5 * mu * (&disc_out - t - &u).iter().map(|v| v * v).sum::<f64>();
        a + b
    };
    let f_star = objective(&t_star);
    for _ in 0..100 {
        let delta = rand_array(4, 36, &mut r).mapv(|v| (v - 0.5) * 2e-3);
        let perturbed = &t_star + &delta;
        assert!(
            objective(&perturbed) >= f_star - 1e-15,
            "perturbation decreased the T objective"
        );
    }
    // zero-residual value at the default weights
    let t0 = update_t(&u, &u, lambda1, mu).unwrap();
    let expected = lambda1 / (lambda1 + mu);
    for &v in t0.iter() {
        assert!((v - 0.009_900_990_099_009_901).abs() <= 1e-8);
        assert!((v - expected).abs() <= 1e-12);
    }
    pass("03 t-update: minimizer over 100 perturbations, zero-residual value 0.00990099 +/- 1e-8");
}

// ---------------------------------------------------------------------------
// 04: monotone descent of the backtracking A-update
// ---------------------------------------------------------------------------

#[test]
fn acceptance_04_descent() {
    let mut violations = 0usize;
    for seed in 0..10u64 {
        let mut r = rng(400 + seed);
        let srf = block_srf(2, 6);
        let s_u = rand_bpm(2, 8, 8, &mut r);
        let p = estimate_spectral_prior(&[rand_cube(6, 8, 8, &mut r)], 64).unwrap();
        let disc = DiscriminatorParams::seeded(6, seed);
        let config = SolverConfig::default();
        let out = solve_from_su(&s_u, &srf, Some(&p), Some(&disc), &config).unwrap();
        for pair in out.trace.windows(2) {
            if pair[0].outer_iter == pair[1].outer_iter && pair[1].total > pair[0].total + 1e-12 {
                violations += 1;
            }
        }
        assert!(!out.stalled, "seed {seed}: A-update stalled");
    }
    assert_eq!(violations, 0, "{violations} objective increases within outer iterations");
    pass("04 descent: zero objective increases over 10 seeded problems");
}

// ---------------------------------------------------------------------------
// 05: degenerate configuration equals plain least-squares gradient descent
// ---------------------------------------------------------------------------

/// Independent circular convolution (and, with the flipped kernel, its
/// adjoint), written directly from the definition.
fn naive_conv(img: &Array2<f64>, w: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = img.dim();
    let size = w.nrows();
    let half = (size / 2) as isize;
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let mut acc = 0.0;
        for i in 0..size {
            for j in 0..size {
                let rr = (r as isize + i as isize - half).rem_euclid(rows as isize) as usize;
                let cc = (c as isize + j as isize - half).rem_euclid(cols as isize) as usize;
                acc += w[[i, j]] * img[[rr, cc]];
            }
        }
        acc
    })
}

fn flip(w: &Array2<f64>) -> Array2<f64> {
    let n = w.nrows();
    Array2::from_shape_fn((n, n), |(r, c)| w[[n - 1 - r, n - 1 - c]])
}

#[test]
fn acceptance_05_degenerate_equivalence() {
    let mut r = rng(505);
    let (bands, rows, cols) = (6, 8, 8);
    let srf = block_srf(2, bands);
    let s_u = rand_bpm(2, rows, cols, &mut r);
    let gamma = 0.05;
    let config = SolverConfig {
        lambda1: 0.0,
        lambda2: 0.0,
        mu: 0.0,
        gamma,
        outer_iters: 1,
        inner_grad_steps: 50,
        tol: 0.0,
        clamp_output: false,
        use_backtracking: false,
        record_iterates: true,
    };
    let out = solve_from_su(&s_u, &srf, None, None, &config).unwrap();
    assert_eq!(out.iterates.len(), 50);

    // reference: A0 = D^T (D D^T)^-1 S_u clamped, then plain gradient steps
    let d = &srf.values;
    let dn = nalgebra::DMatrix::from_fn(d.nrows(), d.ncols(), |i, j| d[[i, j]]);
    let gram = &dn * dn.transpose();
    let sun = nalgebra::DMatrix::from_fn(2, rows * cols, |i, j| s_u.values[[i, j]]);
    let coeff = gram.clone().lu().solve(&sun).unwrap();
    let a0n = dn.transpose() * coeff;
    let mut a_ref = Array2::from_shape_fn((bands, rows * cols), |(i, j)| a0n[(i, j)].max(0.0));

    let kernel = solver_blur_kernel();
    let wf = flip(&kernel.weights);
    let npix = rows * cols;
    let to_img = |m: &Array2<f64>, b: usize| {
        Array2::from_shape_fn((rows, cols), |(rr, cc)| m[[b, rr * cols + cc]])
    };
    for (step, lib_a) in out.iterates.iter().enumerate() {
        // blur each band, apply D, residual, D^T, adjoint blur
        let mut blurred = Array2::zeros((bands, npix));
        for b in 0..bands {
            let img = naive_conv(&to_img(&a_ref, b), &kernel.weights);
            for rr in 0..rows {
                for cc in 0..cols {
                    blurred[[b, rr * cols + cc]] = img[[rr, cc]];
                }
            }
        }
        let residual = d.dot(&blurred) - &s_u.values;
        let lifted = d.t().dot(&residual);
        let mut grad = Array2::zeros((bands, npix));
        for b in 0..bands {
            let img = naive_conv(&to_img(&lifted, b), &wf);
            for rr in 0..rows {
                for cc in 0..cols {
                    grad[[b, rr * cols + cc]] = img[[rr, cc]];
                }
            }
        }
        a_ref = &a_ref - &(&grad * gamma);
        let rel = rel_err(lib_a, &a_ref);
        assert!(rel <= 1e-10, "step {step}: iterate rel err {rel:.3e}");
    }
    pass("05 degenerate-equivalence: 50 iterates match plain gradient descent to 1e-10");
}

// ---------------------------------------------------------------------------
// 06: end-to-end reconstruction beats the spectral-lift baseline
// ---------------------------------------------------------------------------

#[test]
fn acceptance_06_end_to_end() {
    let start = Instant::now();
    let mut r = rng(606);
    let (bands, rows, cols) = (32, 12, 12);
    let npix = rows * cols;
    // rank-4 nonnegative scene with smooth spatial abundances
    let w = Array2::from_shape_fn((bands, 4), |(b, k)| {
        0.2 + 0.8 * (0.5 + 0.5 * ((b as f64 / 6.0 + k as f64).sin())) * r.gen_range(0.5..1.0)
    });
    let h = Array2::from_shape_fn((4, npix), |(k, j)| {
        let (y, x) = ((j / cols) as f64, (j % cols) as f64);
        (0.5 + 0.5 * ((x / 3.0 + k as f64).cos() * (y / 3.0 - k as f64).sin())).max(0.0)
    });
    let a_true_vals = w.dot(&h);
    let peak = a_true_vals.iter().cloned().fold(0.0f64, f64::max);
    let a_true = BandPixelMatrix { values: a_true_vals / peak, rows, cols };
    let true_cube = HsiCube::from_matrix(&a_true, None).unwrap();

    let srf = block_srf(4, bands);
    let kernel = solver_blur_kernel();
    let s_u = apply_srf(&srf, &apply_blur(&a_true, &kernel).unwrap()).unwrap();

    let (baseline, _) = init_a(&s_u, &srf).unwrap();
    let baseline_cube = HsiCube::from_matrix(&baseline, None).unwrap();
    let p = estimate_spectral_prior(&[true_cube.clone()], npix).unwrap();

    let config = SolverConfig {
        lambda1: 0.0,
        lambda2: 0.5,
        mu: 0.0,
        gamma: 1e-3,
        outer_iters: 15,
        inner_grad_steps: 10,
        tol: 1e-9,
        clamp_output: true,
        use_backtracking: true,
        record_iterates: false,
    };
    let out = solve_from_su(&s_u, &srf, Some(&p), None, &config).unwrap();

    let psnr_base = eval::psnr(&true_cube, &baseline_cube).unwrap();
    let psnr_recon = eval::psnr(&true_cube, &out.cube).unwrap();
    let sam_base = eval::sam(&true_cube, &baseline_cube).unwrap();
    let sam_recon = eval::sam(&true_cube, &out.cube).unwrap();
    assert!(
        psnr_recon >= psnr_base + 1.0,
        "PSNR gain {:.2} dB (baseline {psnr_base:.2}, recon {psnr_recon:.2})",
        psnr_recon - psnr_base
    );
    assert!(sam_recon < sam_base, "SAM {sam_recon:.3} not below baseline {sam_base:.3}");
    assert!(start.elapsed().as_secs_f64() < 60.0, "end-to-end too slow");
    pass("06 end-to-end: >= 1 dB PSNR over lift baseline, SAM decreased");
}

// ---------------------------------------------------------------------------
// 07: degradation protocol arithmetic and block structure
// ---------------------------------------------------------------------------

#[test]
fn acceptance_07_simulation_protocol() {
    assert_eq!(BAND_FACTORS, [12, 2, 2, 2, 4, 4, 4, 2, 4, 12, 4, 4]);
    for (f, side) in [(2usize, 5usize), (4, 9), (12, 23)] {
        let sigma = degradation_sigma(f);
        assert!((sigma - 0.4247 * f as f64).abs() < 1e-15);
        let expected_side = 2 * (2.0 * sigma).ceil() as usize + 1;
        assert_eq!(expected_side, side);
        assert!(build_gaussian_kernel(side, sigma).is_ok());
    }
    assert_eq!(SentinelProduct::replication(12), 6);
    assert_eq!(SentinelProduct::replication(4), 2);
    assert_eq!(SentinelProduct::replication(2), 1);

    // spectral chain: 425 -> 372 -> 186 bands
    let mut r = rng(707);
    let full = rand_cube(425, 6, 6, &mut r);
    let kept = remove_water_bands(&full).unwrap();
    assert_eq!(kept.bands, 372);
    let reduced = spectral_downsample2(&kept).unwrap();
    assert_eq!(reduced.bands, 186);
    // first kept band is original band 2 (1-indexed), then band 3
    let want = 0.5 * (full.sample(1, 0, 0) + full.sample(2, 0, 0));
    assert!((reduced.sample(0, 0, 0) - want).abs() < 1e-15);

    // product grid and per-band block constancy
    let cube = rand_cube(24, 24, 24, &mut r);
    let srf = block_srf(12, 24);
    let (product, s_true_u) = simulate_sentinel2(&cube, &srf).unwrap();
    assert_eq!((product.cube.rows, product.cube.cols), (12, 12));
    assert_eq!(s_true_u.bands, 12);
    // S_u = D * A exactly
    let expect = apply_srf(&srf, &cube.as_matrix()).unwrap();
    assert!(rel_err(&s_true_u.as_matrix().values, &expect.values) < 1e-14);
    for b in 0..12 {
        let rep = SentinelProduct::replication(BAND_FACTORS[b]);
        if rep == 1 {
            continue;
        }
        for br in 0..12 / rep {
            for bc in 0..12 / rep {
                let v = product.cube.sample(b, br * rep, bc * rep);
                for dr in 0..rep {
                    for dc in 0..rep {
                        assert_eq!(
                            product.cube.sample(b, br * rep + dr, bc * rep + dc),
                            v,
                            "band {b} not constant on {rep}x{rep} blocks"
                        );
                    }
                }
            }
        }
    }
    pass("07 simulation: sigma/kernel arithmetic, band chain 425->372->186, block-constant grid");
}

// ---------------------------------------------------------------------------
// 08: discriminator training separates structure from noise
// ---------------------------------------------------------------------------

fn structured_cube(bands: usize, rows: usize, cols: usize, phase: f64) -> HsiCube {
    let mut data = Vec::with_capacity(bands * rows * cols);
    for b in 0..bands {
        for r in 0..rows {
            for c in 0..cols {
                let v = 0.5
                    + 0.25 * ((r as f64 / 3.0 + phase).sin())
                    + 0.25 * ((c as f64 / 3.0 + b as f64 + phase).cos());
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    HsiCube::new(bands, rows, cols, data, None).unwrap()
}

#[test]
fn acceptance_08_discriminator_training() {
    let real = vec![structured_cube(3, 16, 16, 0.0), structured_cube(3, 16, 16, 1.3)];
    let mut r = rng(808);
    let fake = vec![rand_cube(3, 16, 16, &mut r), rand_cube(3, 16, 16, &mut r)];
    let init = DiscriminatorParams::seeded(3, 7);
    let opts = TrainOptions {
        steps: 200,
        step_size: 2e-3,
        patch_size: 8,
        seed: 1,
    };
    let (_, trace) = train_discriminator(&init, &real, &fake, &opts).unwrap();
    let first = trace.first().unwrap();
    let last = trace.last().unwrap();
    assert!(
        last.p_r - last.p_f >= 0.2,
        "separation {:.3} below 0.2",
        last.p_r - last.p_f
    );
    assert!(last.loss < first.loss, "loss did not decrease");
    let (_, trace2) = train_discriminator(&init, &real, &fake, &opts).unwrap();
    assert_eq!(trace, trace2, "training is not deterministic");
    pass("08 discriminator: separation >= 0.2, loss decreased, deterministic");
}

// ---------------------------------------------------------------------------
// 09: metrics against naive oracles
// ---------------------------------------------------------------------------

fn oracle_pixel_angle(reference: &HsiCube, estimate: &HsiCube, j: usize) -> Option<f64> {
    let npix = reference.pixels();
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for b in 0..reference.bands {
        let x = reference.data[b * npix + j];
        let y = estimate.data[b * npix + j];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0).acos())
    }
}

#[test]
fn acceptance_09_metric_oracles() {
    for seed in 0..20u64 {
        let mut r = rng(900 + seed);
        let reference = rand_cube(5, 12, 12, &mut r);
        let estimate = rand_cube(5, 12, 12, &mut r);
        let npix = 144;

        // PSNR: mean over per-band 10 log10(1 / mse), peak 1
        let mut acc = 0.0;
        for b in 0..5 {
            let mse: f64 = (0..npix)
                .map(|j| {
                    let d = reference.data[b * npix + j] - estimate.data[b * npix + j];
                    d * d
                })
                .sum::<f64>()
                / npix as f64;
            acc += 10.0 * (1.0 / mse).log10();
        }
        let psnr_oracle = acc / 5.0;
        assert!((eval::psnr(&reference, &estimate).unwrap() - psnr_oracle).abs() < 1e-12);

        // RMSE over all entries
        let mse: f64 = reference
            .data
            .iter()
            .zip(estimate.data.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / (5 * npix) as f64;
        assert!((eval::rmse(&reference, &estimate).unwrap() - mse.sqrt()).abs() < 1e-12);

        // SAM: mean per-pixel angle in degrees
        let angles: Vec<f64> = (0..npix)
            .filter_map(|j| oracle_pixel_angle(&reference, &estimate, j))
            .collect();
        let sam_oracle = (angles.iter().sum::<f64>() / angles.len() as f64).to_degrees();
        assert!((eval::sam(&reference, &estimate).unwrap() - sam_oracle).abs() < 1e-10);

        // adaptive l1: angle-weighted absolute error, averaged over entries
        let mut l1 = 0.0;
        for j in 0..npix {
            let alpha = oracle_pixel_angle(&reference, &estimate, j).unwrap_or(0.0);
            for b in 0..5 {
                l1 += alpha * (reference.data[b * npix + j] - estimate.data[b * npix + j]).abs();
            }
        }
        l1 /= (5 * npix) as f64;
        assert!((eval::adaptive_l1(&reference, &estimate).unwrap() - l1).abs() < 1e-12);

        // SSIM: naive re-implementation, interior 11x11 Gaussian windows
        let mut ssim_acc = 0.0;
        for b in 0..5 {
            let x = reference.band(b);
            let y = estimate.band(b);
            let mut wsum = 0.0;
            let mut weights = Array2::zeros((11, 11));
            for i in 0..11 {
                for j in 0..11 {
                    let dy = i as f64 - 5.0;
                    let dx = j as f64 - 5.0;
                    let v = (-(dx * dx + dy * dy) / 4.5).exp();
                    weights[[i, j]] = v;
                    wsum += v;
                }
            }
            weights.mapv_inplace(|v| v / wsum);
            let mut total = 0.0;
            let mut count = 0;
            for r0 in 0..=12 - 11 {
                for c0 in 0..=12 - 11 {
                    let mut mx = 0.0;
                    let mut my = 0.0;
                    for i in 0..11 {
                        for j in 0..11 {
                            mx += weights[[i, j]] * x[[r0 + i, c0 + j]];
                            my += weights[[i, j]] * y[[r0 + i, c0 + j]];
                        }
                    }
                    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
                    for i in 0..11 {
                        for j in 0..11 {
                            let dx = x[[r0 + i, c0 + j]] - mx;
                            let dy = y[[r0 + i, c0 + j]] - my;
                            vx += weights[[i, j]] * dx * dx;
                            vy += weights[[i, j]] * dy * dy;
                            cov += weights[[i, j]] * dx * dy;
                        }
                    }
                    total += ((2.0 * mx * my + 1e-4) * (2.0 * cov + 9e-4))
                        / ((mx * mx + my * my + 1e-4) * (vx + vy + 9e-4));
                    count += 1;
                }
            }
            ssim_acc += total / count as f64;
        }
        let ssim_oracle = ssim_acc / 5.0;
        assert!((eval::ssim(&reference, &estimate).unwrap() - ssim_oracle).abs() < 1e-12);

        // exact SAM scale invariance (power-of-two scale)
        let scaled = HsiCube::new(
            5,
            12,
            12,
            estimate.data.iter().map(|v| v * 4.0).collect(),
            None,
        )
        .unwrap();
        let s1 = eval::sam(&reference, &estimate).unwrap();
        let s2 = eval::sam(&reference, &scaled).unwrap();
        assert!(s1 == s2, "SAM not exactly scale invariant: {s1} vs {s2}");
    }
    pass("09 metrics: 20 instances match naive oracles, SAM exactly scale invariant");
}

// ---------------------------------------------------------------------------
// 10: description-length model-order selection
// ---------------------------------------------------------------------------

#[test]
fn acceptance_10_mdl_order() {
    let start = Instant::now();
    let (bands, sources, npix) = (12usize, 4usize, 4096usize);
    let mut hits = 0;
    for seed in 0..20u64 {
        let mut r = rng(1000 + seed);
        let mixing = Array2::from_shape_fn((bands, sources), |_| r.gen_range(-1.0..1.0f64));
        let src = Array2::from_shape_fn((sources, npix), |_| {
            // Box-Muller
            let u1: f64 = r.gen_range(1e-12..1.0);
            let u2: f64 = r.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        });
        let mut x = mixing.dot(&src);
        let signal_power = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let noise_sigma = (signal_power / 10f64.powf(3.0)).sqrt(); // SNR 30 dB
        for v in x.iter_mut() {
            let u1: f64 = r.gen_range(1e-12..1.0);
            let u2: f64 = r.gen_range(0.0..1.0);
            *v += noise_sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
        let m = BandPixelMatrix { values: x, rows: 64, cols: 64 };
        let result = eval::mdl_order(&m, bands - 1).unwrap();
        if result.selected == sources {
            hits += 1;
        }
    }
    assert!(hits >= 19, "order 4 recovered in only {hits}/20 seeds");
    assert!(start.elapsed().as_secs_f64() < 10.0, "order selection too slow");
    pass("10 mdl: true order recovered in >= 19/20 seeds");
}

// ---------------------------------------------------------------------------
// 11: CLI reproducibility from the config echo
// ---------------------------------------------------------------------------

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_s2hsi"))
}

fn run_ok(args: &[&str]) {
    let out = cli().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

/// Rebuild an argv from a `key = value` echo file, overriding the out dir.
fn argv_from_echo(echo: &Path, out_override: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(echo).unwrap();
    let mut argv = Vec::new();
    for line in text.lines() {
        let (key, value) = line.split_once(" = ").unwrap();
        if key == "command" {
            argv.push(value.to_string());
        } else if value == "true" {
            argv.push(format!("--{key}"));
        } else if value == "false" {
            continue;
        } else if key == "out" {
            argv.push("--out".into());
            argv.push(out_override.display().to_string());
        } else {
            argv.push(format!("--{key}"));
            argv.push(value.to_string());
        }
    }
    argv
}

fn reference_scene(seed: u64) -> HsiCube {
    let mut r = rng(seed);
    let (bands, rows, cols) = (425, 24, 24);
    let mut data = Vec::with_capacity(bands * rows * cols);
    for b in 0..bands {
        for rr in 0..rows {
            for cc in 0..cols {
                let v = 0.4
                    + 0.2 * ((rr as f64 / 5.0 + b as f64 / 40.0).sin())
                    + 0.2 * ((cc as f64 / 4.0).cos())
                    + 0.05 * r.gen_range(-1.0..1.0);
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    let wavelengths = (0..bands).map(|i| 365.0 + 5.0 * i as f64).collect();
    HsiCube::new(bands, rows, cols, data, Some(wavelengths)).unwrap()
}

#[test]
fn acceptance_11_cli_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let scene_a = root.join("alpha.hsc");
    let scene_b = root.join("beta.hsc");
    write_cube(&reference_scene(1), &scene_a).unwrap();
    write_cube(&reference_scene(2), &scene_b).unwrap();

    let (dir_a, dir_b, dir_c) = (root.join("simA"), root.join("simB"), root.join("simC"));
    let base = [
        "simulate",
        "--input",
        scene_a.to_str().unwrap(),
        "--input",
        scene_b.to_str().unwrap(),
        "--seed",
        "3",
    ];
    let mut args_a: Vec<&str> = base.to_vec();
    args_a.extend(["--out", dir_a.to_str().unwrap(), "--workers", "1"]);
    run_ok(&args_a);
    let dir_c_s = dir_c.display().to_string();
    let mut args_c: Vec<&str> = base.to_vec();
    args_c.extend(["--out", &dir_c_s, "--workers", "2"]);
    run_ok(&args_c);

    let products = [
        "alpha_ref.hsc",
        "alpha_product.hsc",
        "alpha_su.hsc",
        "beta_ref.hsc",
        "beta_product.hsc",
        "beta_su.hsc",
        "srf.txt",
        "band_table.txt",
        "manifest.tsv",
    ];
    for name in products {
        assert_eq!(
            read_bytes(&dir_a.join(name)),
            read_bytes(&dir_c.join(name)),
            "{name} differs between worker counts"
        );
    }

    // rerun from the echo into a fresh directory
    let argv = argv_from_echo(&dir_a.join("config_echo.txt"), &dir_b);
    let out = cli().args(&argv).output().unwrap();
    assert!(out.status.success(), "echo rerun failed: {}", String::from_utf8_lossy(&out.stderr));
    for name in products {
        assert_eq!(
            read_bytes(&dir_a.join(name)),
            read_bytes(&dir_b.join(name)),
            "{name} differs after echo rerun"
        );
    }

    // downstream stages
    let prior = root.join("prior.spm");
    run_ok(&[
        "build-prior",
        "--manifest",
        dir_a.join("manifest.tsv").to_str().unwrap(),
        "--out",
        prior.to_str().unwrap(),
    ]);
    let disc = root.join("disc.dsc");
    run_ok(&[
        "train-disc",
        "--manifest",
        dir_a.join("manifest.tsv").to_str().unwrap(),
        "--srf",
        dir_a.join("srf.txt").to_str().unwrap(),
        "--out",
        disc.to_str().unwrap(),
        "--steps",
        "3",
        "--seed",
        "5",
    ]);
    assert!(disc.with_extension("loss.csv").exists());

    let (rec1, rec2) = (root.join("rec1"), root.join("rec2"));
    run_ok(&[
        "reconstruct",
        "--product",
        dir_a.join("alpha_product.hsc").to_str().unwrap(),
        "--srf",
        dir_a.join("srf.txt").to_str().unwrap(),
        "--prior",
        prior.to_str().unwrap(),
        "--disc",
        disc.to_str().unwrap(),
        "--out",
        rec1.to_str().unwrap(),
        "--outer-iters",
        "1",
        "--unfold-faithful",
    ]);
    let argv = argv_from_echo(&rec1.join("config_echo.txt"), &rec2);
    let out = cli().args(&argv).output().unwrap();
    assert!(out.status.success(), "reconstruct rerun failed: {}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        read_bytes(&rec1.join("recon.hsc")),
        read_bytes(&rec2.join("recon.hsc")),
        "reconstruction differs after echo rerun"
    );
    assert!(rec1.join("trace.csv").exists());

    // reconstruction lives on the unified grid and scores against the reference
    let recon = read_cube(&rec1.join("recon.hsc")).unwrap();
    assert_eq!((recon.bands, recon.rows, recon.cols), (186, 24, 24));
    let eval_dir = root.join("eval");
    run_ok(&[
        "eval",
        "--reference",
        dir_a.join("alpha_ref.hsc").to_str().unwrap(),
        "--estimate",
        rec1.join("recon.hsc").to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
        "--composite",
        "25,12,8",
    ]);
    let metrics = std::fs::read_to_string(eval_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("scene_id,psnr_db,sam_deg,ssim,rmse,l_g"));
    assert_eq!(metrics.lines().count(), 2);
    assert!(eval_dir.join("recon_rgb.ppm").exists());

    let mdl_out = cli()
        .args([
            "mdl",
            "--input",
            dir_a.join("alpha_ref.hsc").to_str().unwrap(),
            "--max-k",
            "6",
        ])
        .output()
        .unwrap();
    assert!(mdl_out.status.success());
    let selected: usize = String::from_utf8_lossy(&mdl_out.stdout).trim().parse().unwrap();
    assert!((1..=6).contains(&selected));

    // exit codes: 2 for usage/missing input, 1 for corrupt data
    let missing = cli()
        .args(["mdl", "--input", root.join("nope.hsc").to_str().unwrap(), "--max-k", "3"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    let no_disc = cli()
        .args([
            "reconstruct",
            "--product",
            dir_a.join("alpha_product.hsc").to_str().unwrap(),
            "--srf",
            dir_a.join("srf.txt").to_str().unwrap(),
            "--prior",
            prior.to_str().unwrap(),
            "--out",
            root.join("recX").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(no_disc.status.code(), Some(2));
    let corrupt_path = root.join("corrupt.hsc");
    let mut bytes = read_bytes(&dir_a.join("alpha_ref.hsc"));
    bytes.truncate(bytes.len() - 7);
    std::fs::write(&corrupt_path, bytes).unwrap();
    let corrupt = cli()
        .args(["mdl", "--input", corrupt_path.to_str().unwrap(), "--max-k", "3"])
        .output()
        .unwrap();
    assert_eq!(corrupt.status.code(), Some(1));

    pass("11 cli: byte-identical across workers and echo reruns, exit codes mapped");
}
