//! Temporary diagnostics (ignored by default).

use costereo_core::config::CoTeachConfig;
use costereo_core::data::{generate_scene, sample_scene_spec, DEFAULT_NOISE_SIGMA};
use costereo_core::net;
use costereo_core::trainer::{self, train, TrainOptions};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
#[ignore]
fn watch_overfit() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut spec = sample_scene_spec(&mut rng, 64, 48, DEFAULT_NOISE_SIGMA);
    for layer in &mut spec.layers {
        layer.disparity = layer.disparity.min(30.0);
    }
    spec.layers.sort_by(|a, b| a.disparity.total_cmp(&b.disparity));
    spec.layers.dedup_by(|a, b| a.disparity == b.disparity);
    let mut sample = generate_scene(&spec).unwrap();
    sample.id = "overfit".into();
    let gt_mean: f32 =
        sample.gt_disparity.as_ref().unwrap().data.iter().sum::<f32>() / (64.0 * 48.0);
    println!("gt mean disparity {gt_mean:.2}");
    let data = vec![sample];

    let mut config = CoTeachConfig::default();
    config.eta = 3e-3;
    config.decay = 1.0;
    config.batch = 1;
    config.t_k = 8;
    config.n_max = 8;

    // untrained baseline
    let p0 = net::init_params::<f32>(config.seed_a, &config.arch).unwrap();
    let r0 = trainer::evaluate(&p0, &data).unwrap();
    println!("untrained AEPE {:.3}", r0.aepe_all);
    let d0 = net::forward(
        &p0.detached(),
        &data[0].left.to_tensor::<f32>(),
        &data[0].right.to_tensor::<f32>(),
    )
    .unwrap();
    let mean0: f32 = d0.values().iter().sum::<f32>() / d0.numel() as f32;
    println!("untrained mean pred {mean0:.2}");

    for epochs in [1usize, 2, 4, 8, 16, 32] {
        let mut c = config.clone();
        c.t_max = epochs;
        c.t_k = (epochs / 5).max(1);
        let outcome = train(&data, &c, &TrainOptions::default()).unwrap();
        let report = trainer::evaluate(&outcome.state.params_a, &data).unwrap();
        let d = net::forward(
            &outcome.state.params_a.detached(),
            &data[0].left.to_tensor::<f32>(),
            &data[0].right.to_tensor::<f32>(),
        )
        .unwrap();
        let mean: f32 = d.values().iter().sum::<f32>() / d.numel() as f32;
        let last = outcome.rows.last().unwrap();
        println!(
            "epochs {epochs:3}: AEPE {:>7.3}  mean_pred {:>6.2}  ph {:.4} sm {:.4} da {:.4}",
            report.aepe_all, mean, last.ph, last.sm, last.da
        );
    }
}

#[test]
#[ignore]
fn photometric_landscape() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut spec = sample_scene_spec(&mut rng, 64, 48, DEFAULT_NOISE_SIGMA);
    for layer in &mut spec.layers {
        layer.disparity = layer.disparity.min(30.0);
    }
    spec.layers.sort_by(|a, b| a.disparity.total_cmp(&b.disparity));
    spec.layers.dedup_by(|a, b| a.disparity == b.disparity);
    let sample = generate_scene(&spec).unwrap();
    let i_l = sample.left.to_tensor::<f32>();
    let i_r = sample.right.to_tensor::<f32>();
    let o = costereo_autograd::Tensor::<f32>::zeros(&[1, 1, 48, 64]);

    // loss at ground truth
    let gt = sample.gt_disparity.as_ref().unwrap().to_tensor::<f32>();
    let at_gt = costereo_core::losses::photometric_loss(&i_l, &i_r, &gt, &o, 0.85)
        .unwrap()
        .item();
    println!("ph at ground truth: {at_gt:.5}");

    for dv in [0.5f32, 2.0, 4.0, 8.0, 12.0, 16.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0] {
        let d = costereo_autograd::Tensor::<f32>::param(&[1, 1, 48, 64], vec![dv; 48 * 64]).unwrap();
        let loss = costereo_core::losses::photometric_loss(&i_l, &i_r, &d, &o, 0.85).unwrap();
        let v = loss.item();
        loss.backward().unwrap();
        let g = d.grad().unwrap();
        let mean_g: f32 = g.iter().sum::<f32>() / g.len() as f32;
        println!("d={dv:5.1}: ph={v:.5} mean_grad={mean_g:+.6} (negative pushes d up)");
    }
}

#[test]
#[ignore]
fn watch_term_ablation() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut spec = sample_scene_spec(&mut rng, 64, 48, DEFAULT_NOISE_SIGMA);
    for layer in &mut spec.layers {
        layer.disparity = layer.disparity.min(30.0);
    }
    spec.layers.sort_by(|a, b| a.disparity.total_cmp(&b.disparity));
    spec.layers.dedup_by(|a, b| a.disparity == b.disparity);
    let mut sample = generate_scene(&spec).unwrap();
    sample.id = "overfit".into();
    let data = vec![sample];

    for (name, sm, da, lambda2) in [
        ("ph only      ", false, false, 0.5f32),
        ("ph + sm      ", true, false, 0.5),
        ("ph + da      ", false, true, 0.5),
        ("full         ", true, true, 0.5),
        ("full, l2=0.1 ", true, true, 0.1),
    ] {
        let mut c = CoTeachConfig::default();
        c.eta = 3e-3;
        c.decay = 1.0;
        c.batch = 1;
        c.t_max = 16;
        c.t_k = 3;
        c.n_max = 8;
        c.use_smoothness = sm;
        c.use_augmentation = da;
        c.weights.lambda2 = lambda2;
        let outcome = train(&data, &c, &TrainOptions::default()).unwrap();
        let report = trainer::evaluate(&outcome.state.params_a, &data).unwrap();
        let d = net::forward(
            &outcome.state.params_a.detached(),
            &data[0].left.to_tensor::<f32>(),
            &data[0].right.to_tensor::<f32>(),
        )
        .unwrap();
        let mean: f32 = d.values().iter().sum::<f32>() / d.numel() as f32;
        println!("{name}: AEPE {:>7.3}  mean_pred {:>6.2}", report.aepe_all, mean);
    }
}

#[test]
#[ignore]
fn lambda_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut spec = sample_scene_spec(&mut rng, 64, 48, DEFAULT_NOISE_SIGMA);
    for layer in &mut spec.layers {
        layer.disparity = layer.disparity.min(30.0);
    }
    spec.layers.sort_by(|a, b| a.disparity.total_cmp(&b.disparity));
    spec.layers.dedup_by(|a, b| a.disparity == b.disparity);
    let mut sample = generate_scene(&spec).unwrap();
    sample.id = "overfit".into();
    let data = vec![sample];

    for (l1, l2, eta) in [
        (0.1f32, 0.02f32, 3e-3f32),
        (0.1, 0.01, 3e-3),
        (0.02, 0.02, 3e-3),
        (0.02, 0.01, 3e-3),
        (0.1, 0.02, 1e-2),
        (0.02, 0.01, 1e-2),
        (0.0, 0.0, 1e-2),
        (0.02, 0.0, 1e-2),
    ] {
        let mut c = CoTeachConfig::default();
        c.eta = eta;
        c.decay = 1.0;
        c.batch = 1;
        c.t_max = 30;
        c.t_k = 6;
        c.n_max = 8;
        c.weights.lambda1 = l1;
        c.weights.lambda2 = l2;
        c.use_augmentation = l2 > 0.0;
        c.use_smoothness = l1 > 0.0;
        let outcome = train(&data, &c, &TrainOptions::default()).unwrap();
        let report = trainer::evaluate(&outcome.state.params_a, &data).unwrap();
        let d = net::forward(
            &outcome.state.params_a.detached(),
            &data[0].left.to_tensor::<f32>(),
            &data[0].right.to_tensor::<f32>(),
        )
        .unwrap();
        let mean: f32 = d.values().iter().sum::<f32>() / d.numel() as f32;
        println!(
            "l1={l1:<5} l2={l2:<5} eta={eta:<7}: AEPE {:>7.3}  mean_pred {:>6.2}",
            report.aepe_all, mean
        );
    }
}

#[test]
#[ignore]
fn long_overfit() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut spec = sample_scene_spec(&mut rng, 64, 48, DEFAULT_NOISE_SIGMA);
    for layer in &mut spec.layers {
        layer.disparity = layer.disparity.min(30.0);
    }
    spec.layers.sort_by(|a, b| a.disparity.total_cmp(&b.disparity));
    spec.layers.dedup_by(|a, b| a.disparity == b.disparity);
    let mut sample = generate_scene(&spec).unwrap();
    sample.id = "overfit".into();
    let data = vec![sample];

    let mut c = CoTeachConfig::default();
    c.eta = std::env::var("ETA").map(|v| v.parse().unwrap()).unwrap_or(1e-2);
    c.decay = 1.0;
    c.batch = 1;
    c.t_k = 10;
    c.n_max = 8;
    c.weights.lambda1 = std::env::var("L1").map(|v| v.parse().unwrap()).unwrap_or(0.02);
    c.weights.lambda2 = std::env::var("L2").map(|v| v.parse().unwrap()).unwrap_or(0.01);
    for epochs in [20usize, 40, 70, 100] {
        c.t_max = epochs;
        let outcome = train(&data, &c, &TrainOptions::default()).unwrap();
        let report = trainer::evaluate(&outcome.state.params_a, &data).unwrap();
        let d = net::forward(
            &outcome.state.params_a.detached(),
            &data[0].left.to_tensor::<f32>(),
            &data[0].right.to_tensor::<f32>(),
        )
        .unwrap();
        let mean: f32 = d.values().iter().sum::<f32>() / d.numel() as f32;
        println!(
            "epochs {epochs:4}: AEPE {:>7.3} (noc {:>7.3})  mean_pred {:>6.2}",
            report.aepe_all, report.aepe_noc, mean
        );
    }
}

#[test]
#[ignore]
fn probe_foreground_costs() {
    use costereo_core::net::{build_cost_volume, extract_features};
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut spec = sample_scene_spec(&mut rng, 64, 48, DEFAULT_NOISE_SIGMA);
    for layer in &mut spec.layers {
        layer.disparity = layer.disparity.min(30.0);
    }
    spec.layers.sort_by(|a, b| a.disparity.total_cmp(&b.disparity));
    spec.layers.dedup_by(|a, b| a.disparity == b.disparity);
    println!("layers:");
    for l in &spec.layers {
        println!("  d={} rect=({},{} {}x{})", l.disparity, l.x0, l.y0, l.w, l.h);
    }
    let mut sample = generate_scene(&spec).unwrap();
    sample.id = "overfit".into();
    let data = vec![sample];

    let mut c = CoTeachConfig::default();
    c.eta = 1e-2;
    c.decay = 1.0;
    c.batch = 1;
    c.t_k = 10;
    c.n_max = 8;
    c.t_max = 60;
    c.weights.lambda1 = 0.02;
    c.weights.lambda2 = 0.01;
    let outcome = train(&data, &c, &TrainOptions::default()).unwrap();
    let params = outcome.state.params_a.detached();
    let i_l = data[0].left.to_tensor::<f32>();
    let i_r = data[0].right.to_tensor::<f32>();
    let f_l = extract_features(&params, &i_l).unwrap();
    let f_r = extract_features(&params, &i_r).unwrap();
    let cv = build_cost_volume(&f_l, &f_r, 16).unwrap();
    let d_full = net::forward(&params, &i_l, &i_r).unwrap();
    let gt = data[0].gt_disparity.as_ref().unwrap();

    // pick the most-foreground layer's interior
    let fg = spec.layers.last().unwrap();
    let (cy, cx) = ((fg.y0 as usize + fg.h as usize / 2), (fg.x0 as usize + fg.w as usize / 2));
    let (qy, qx) = (cy / 4, cx / 4);
    let plane = 12 * 16;
    println!("fg centre ({cy},{cx}): gt={} pred={:.2}", gt.at(cy, cx), d_full.values()[cy * 64 + cx]);
    print!("raw cost row: ");
    for d in 0..16 {
        print!("{:.3} ", cv.cost.values()[d * plane + qy * 16 + qx]);
    }
    println!();
    // background reference pixel
    let (by, bx) = (40usize, 20usize);
    println!("bg pixel ({by},{bx}): gt={} pred={:.2}", gt.at(by, bx), d_full.values()[by * 64 + bx]);
    print!("raw cost row: ");
    for d in 0..16 {
        print!("{:.3} ", cv.cost.values()[d * plane + (by / 4) * 16 + bx / 4]);
    }
    println!();
}

fn fixed_scene() -> costereo_core::data::StereoSample {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut spec = sample_scene_spec(&mut rng, 64, 48, DEFAULT_NOISE_SIGMA);
    for layer in &mut spec.layers {
        layer.disparity = layer.disparity.min(30.0);
    }
    spec.layers.sort_by(|a, b| a.disparity.total_cmp(&b.disparity));
    spec.layers.dedup_by(|a, b| a.disparity == b.disparity);
    let mut s = generate_scene(&spec).unwrap();
    s.id = "overfit".into();
    s
}

fn probe(params: &costereo_core::net::NetworkParams<f32>, sample: &costereo_core::data::StereoSample) -> String {
    use costereo_core::net::{build_cost_volume, extract_features};
    let p = params.detached();
    let i_l = sample.left.to_tensor::<f32>();
    let i_r = sample.right.to_tensor::<f32>();
    let d = net::forward(&p, &i_l, &i_r).unwrap();
    let gt = sample.gt_disparity.as_ref().unwrap();
    let (mut fg_err, mut fg_n, mut bg_err, mut bg_n) = (0.0f64, 0usize, 0.0f64, 0usize);
    for i in 0..gt.data.len() {
        let e = (d.values()[i] - gt.data[i]).abs() as f64;
        if gt.data[i] > 6.0 {
            fg_err += e;
            fg_n += 1;
        } else {
            bg_err += e;
            bg_n += 1;
        }
    }
    let f_l = extract_features(&p, &i_l).unwrap();
    let f_r = extract_features(&p, &i_r).unwrap();
    let cv = build_cost_volume(&f_l, &f_r, 16).unwrap();
    let plane = 12 * 16;
    let mut contrast = 0.0f64;
    for px in 0..plane {
        let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
        for dd in 0..16 {
            let v = cv.cost.values()[dd * plane + px];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        contrast += (hi - lo) as f64;
    }
    format!(
        "bgAEPE {:5.2} fgAEPE {:5.2} cost_contrast {:4.2}",
        bg_err / bg_n as f64,
        fg_err / fg_n.max(1) as f64,
        contrast / plane as f64
    )
}

#[test]
#[ignore]
fn grid() {
    let sample = fixed_scene();
    let data = vec![sample];
    println!("untrained: {}", probe(&net::init_params(1, &CoTeachConfig::default().arch).unwrap(), &data[0]));
    for eta in [3e-3f32, 1e-2] {
        for (l1, l2) in [(0.0f32, 0.0f32), (0.02, 0.0), (0.1, 0.0), (0.0, 0.01), (0.02, 0.01), (0.1, 0.01)] {
            let mut c = CoTeachConfig::default();
            c.eta = eta;
            c.decay = 1.0;
            c.batch = 1;
            c.t_k = 8;
            c.n_max = 8;
            c.t_max = 40;
            c.weights.lambda1 = l1;
            c.weights.lambda2 = l2;
            c.use_smoothness = l1 > 0.0;
            c.use_augmentation = l2 > 0.0;
            let outcome = train(&data, &c, &TrainOptions::default()).unwrap();
            let report = trainer::evaluate(&outcome.state.params_a, &data).unwrap();
            println!(
                "eta={eta:<6} l1={l1:<5} l2={l2:<5}: AEPE {:>6.2}  {}",
                report.aepe_all,
                probe(&outcome.state.params_a, &data[0])
            );
        }
    }
}

fn proxy_scenes(count: usize, seed: u64) -> Vec<costereo_core::data::StereoSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let mut spec = sample_scene_spec(&mut rng, 64, 48, DEFAULT_NOISE_SIGMA);
            for layer in &mut spec.layers {
                layer.disparity = layer.disparity.min(30.0);
            }
            spec.layers.sort_by(|a, b| a.disparity.total_cmp(&b.disparity));
            spec.layers.dedup_by(|a, b| a.disparity == b.disparity);
            let mut s = generate_scene(&spec).unwrap();
            s.id = format!("{i:06}");
            s
        })
        .collect()
}

#[test]
#[ignore]
fn proxy_grid() {
    let train_set = proxy_scenes(12, 1000);
    let held_out = proxy_scenes(4, 2000);
    let p0 = net::init_params::<f32>(1, &CoTeachConfig::default().arch).unwrap();
    let r0 = trainer::evaluate(&p0, &held_out).unwrap();
    println!("untrained held-out AEPE {:.2}", r0.aepe_all);
    for eta in [1e-3f32, 3e-3, 1e-2] {
        for (l1, l2) in [(0.0f32, 0.0f32), (0.02, 0.005), (0.02, 0.01), (0.1, 0.01)] {
            let mut c = CoTeachConfig::default();
            c.eta = eta;
            c.decay = 1.0;
            c.batch = 2;
            c.t_k = 8;
            c.n_max = 0;
            c.t_max = 40;
            c.weights.lambda1 = l1;
            c.weights.lambda2 = l2;
            c.use_smoothness = l1 > 0.0;
            c.use_augmentation = l2 > 0.0;
            let outcome = train(&train_set, &c, &TrainOptions::default()).unwrap();
            let report = trainer::evaluate(&outcome.state.params_a, &held_out).unwrap();
            println!(
                "eta={eta:<6} l1={l1:<5} l2={l2:<6}: held-out AEPE {:>6.2}  {}",
                report.aepe_all,
                probe(&outcome.state.params_a, &train_set[0])
            );
        }
    }
}

fn full_scenes(count: usize, seed: u64) -> Vec<costereo_core::data::StereoSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let spec = sample_scene_spec(&mut rng, 128, 96, DEFAULT_NOISE_SIGMA);
            let mut s = generate_scene(&spec).unwrap();
            s.id = format!("{i:06}");
            s
        })
        .collect()
}

fn pipeline_probe(params: &costereo_core::net::NetworkParams<f32>, sample: &costereo_core::data::StereoSample) {
    use costereo_core::net::{build_cost_volume, extract_features};
    let p = params.detached();
    let i_l = sample.left.to_tensor::<f32>();
    let i_r = sample.right.to_tensor::<f32>();
    let gt = sample.gt_disparity.as_ref().unwrap();
    // find a deep-foreground pixel (largest gt)
    let (mut best, mut by, mut bx) = (0.0f32, 0, 0);
    for y in 8..gt.h - 8 {
        for x in 40..gt.w - 8 {
            if gt.at(y, x) > best {
                best = gt.at(y, x);
                by = y;
                bx = x;
            }
        }
    }
    let d_full = net::forward(&p, &i_l, &i_r).unwrap();
    let f_l = extract_features(&p, &i_l).unwrap();
    let f_r = extract_features(&p, &i_r).unwrap();
    let cv = build_cost_volume(&f_l, &f_r, 16).unwrap();
    let (qh, qw) = (gt.h / 4, gt.w / 4);
    let plane = qh * qw;
    let (qy, qx) = (by / 4, bx / 4);
    print!("  fg({by},{bx}) gt={best} pred={:.2} | raw:", d_full.values()[by * gt.w + bx]);
    for d in 0..16 {
        print!(" {:.2}", cv.cost.values()[d * plane + qy * qw + qx]);
    }
    println!();
}

#[test]
#[ignore]
fn full_scale_probe() {
    let train_set = full_scenes(12, 1000);
    let held_out = full_scenes(4, 2000);
    let p0 = net::init_params::<f32>(1, &CoTeachConfig::default().arch).unwrap();
    println!("untrained held-out AEPE {:.2}", trainer::evaluate(&p0, &held_out).unwrap().aepe_all);
    pipeline_probe(&p0, &train_set[0]);
    for (eta, l1, l2) in [(3e-3f32, 0.0f32, 0.0f32), (3e-3, 0.02, 0.005), (1e-2, 0.02, 0.005)] {
        let mut c = CoTeachConfig::default();
        c.eta = eta;
        c.decay = 1.0;
        c.batch = 2;
        c.t_k = 8;
        c.n_max = 0;
        c.t_max = 40;
        c.weights.lambda1 = l1;
        c.weights.lambda2 = l2;
        c.use_smoothness = l1 > 0.0;
        c.use_augmentation = l2 > 0.0;
        let outcome = train(&train_set, &c, &TrainOptions::default()).unwrap();
        let report = trainer::evaluate(&outcome.state.params_a, &held_out).unwrap();
        println!(
            "eta={eta:<6} l1={l1:<5} l2={l2:<6}: held-out AEPE {:>6.2} f1 {:>5.1}%",
            report.aepe_all, report.f1_all
        );
        pipeline_probe(&outcome.state.params_a, &train_set[0]);
    }
}

#[test]
#[ignore]
fn lambda_bracket() {
    let train_set = full_scenes(12, 1000);
    let held_out = full_scenes(4, 2000);
    for (l1, l2) in [
        (0.0f32, 0.0f32),
        (0.005, 0.0),
        (0.01, 0.0),
        (0.0, 0.001),
        (0.0, 0.002),
        (0.005, 0.001),
        (0.01, 0.002),
        (0.02, 0.002),
    ] {
        let mut c = CoTeachConfig::default();
        c.eta = 3e-3;
        c.decay = 1.0;
        c.batch = 2;
        c.t_k = 8;
        c.n_max = 0;
        c.t_max = 40;
        c.weights.lambda1 = l1;
        c.weights.lambda2 = l2;
        c.use_smoothness = l1 > 0.0;
        c.use_augmentation = l2 > 0.0;
        let outcome = train(&train_set, &c, &TrainOptions::default()).unwrap();
        let report = trainer::evaluate(&outcome.state.params_a, &held_out).unwrap();
        let report_b = trainer::evaluate(&outcome.state.params_b, &held_out).unwrap();
        println!(
            "l1={l1:<6} l2={l2:<6}: held-out AEPE A {:>6.2} B {:>6.2} f1 {:>5.1}%",
            report.aepe_all, report_b.aepe_all, report.f1_all
        );
    }
}
