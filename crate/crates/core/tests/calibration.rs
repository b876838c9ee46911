//! Manual calibration probes (run with --ignored). Temporary scaffolding.

use std::time::Instant;

use emosr_core::data::split_sequences;
use emosr_core::image::{frame_mse, normalize, upsample_bicubic, downsample, DownsampleFactor};
use emosr_core::models::build_emocnn;
use emosr_core::nn::SgdConfig;
use emosr_core::synth::{gen_synthetic, SyntheticSpec};
use emosr_core::training::{
    overfit_probe, pretrain_srfcn, sr_pairs, PretrainConfig,
};
use emosr_core::data::PipelineLog;

fn sgd() -> SgdConfig {
    SgdConfig {
        base_lr: 0.01,
        momentum: 0.9,
        weight_decay: 5e-4,
        batch_size: 10,
    }
}

#[test]
#[ignore]
fn calib_overfit() {
    let spec = SyntheticSpec {
        n_sequences: 1,
        frames_per_sequence: 10,
        seed: 42,
        noise_level: 0.01,
    };
    let seqs = gen_synthetic(&spec);
    let inputs: Vec<_> = seqs[0].frames.iter().map(normalize).collect();
    let labels = seqs[0].valence.clone();
    let mut model = build_emocnn::<f32>(1);
    let t0 = Instant::now();
    let (iters, mse, curve) =
        overfit_probe(&mut model, &inputs, &labels, &sgd(), 0.01, 2000, 1e-3).unwrap();
    println!(
        "overfit f32: {} iters, final mse {:.2e}, {:.1}s ({:.0} ms/iter)",
        iters,
        mse,
        t0.elapsed().as_secs_f64(),
        t0.elapsed().as_secs_f64() * 1000.0 / (iters.max(1) as f64)
    );
    println!("loss curve every 10: {:?}",
        curve.iter().step_by(10).map(|v| format!("{v:.4}")).collect::<Vec<_>>());
}

#[test]
#[ignore]
fn calib_sr_pretrain() {
    use emosr_core::models::{build_srfcn, frames_to_batch};
    use emosr_core::nn::{mse_loss, sgd_step, Velocity, Workspace};
    use emosr_core::rng::SeededRng;

    let spec = SyntheticSpec { n_sequences: 8, frames_per_sequence: 30, seed: 7, noise_level: 0.01 };
    let seqs = gen_synthetic(&spec);
    let (train, _val, test) = split_sequences(&seqs, 0.15, 0.25).unwrap();
    let s = DownsampleFactor::new(4).unwrap();
    let mut log = PipelineLog::new();
    let pairs = sr_pairs(&train, s, &mut log);
    println!("train pairs: {}", pairs.len());

    // Held-out eval data, precomputed.
    let mut eval_inputs = Vec::new();
    let mut eval_targets = Vec::new();
    for seq in &test {
        for hr in &seq.frames {
            eval_inputs.push(normalize(&upsample_bicubic(&downsample(hr, s))));
            eval_targets.push(normalize(hr));
        }
    }
    let bic: f64 = eval_inputs.iter().zip(&eval_targets).map(|(a, b)| frame_mse(a, b)).sum::<f64>() / eval_inputs.len() as f64;
    println!("bicubic held-out mse {:.5}", bic);

    let mut model = build_srfcn::<f32>(1);
    let mut shuffle = SeededRng::new(99);
    let mut vel = Velocity::zeros_like(&model.net);
    let mut ws = Workspace::new();
    let cfg = sgd();
    let batch = 4usize;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut it = 0usize;
    let t0 = Instant::now();
    'outer: loop {
        shuffle.shuffle(&mut order);
        for chunk in order.chunks(batch) {
            if it >= 240 { break 'outer; }
            let inputs: Vec<_> = chunk.iter().map(|&i| &pairs[i].0).collect();
            let targets: Vec<_> = chunk.iter().map(|&i| &pairs[i].1).collect();
            let x = frames_to_batch::<f32>(&inputs).unwrap();
            let t = frames_to_batch::<f32>(&targets).unwrap();
            let trace = model.net.forward_traced(&x, None, &mut ws).unwrap();
            let (loss, grad) = mse_loss(trace.output(), &t).unwrap();
            let (_, grads) = model.net.backward(&trace, grad, &mut ws).unwrap();
            sgd_step(&mut model.net, &grads, &mut vel, &cfg, 0.01);
            it += 1;
            if it <= 40 || it % 30 == 0 {
                println!("iter {:4} loss {:.5}", it, loss);
            }
            if it % 30 == 0 {
                let mut sr_mse = 0.0;
                for (inp, tgt) in eval_inputs.iter().zip(&eval_targets) {
                    let rec = model.reconstruct(inp, &mut ws).unwrap();
                    sr_mse += frame_mse(&rec, tgt);
                }
                sr_mse /= eval_inputs.len() as f64;
                println!("iter {:4} loss {:.4} held-out sr {:.5} ratio {:.3} ({:.0}s)",
                    it, loss, sr_mse, sr_mse / bic, t0.elapsed().as_secs_f64());
            }
        }
    }
}

#[test]
#[ignore]
fn calib_activation_scales() {
    use emosr_core::models::frames_to_batch;
    let spec = SyntheticSpec { n_sequences: 2, frames_per_sequence: 8, seed: 3, noise_level: 0.01 };
    let seqs = gen_synthetic(&spec);
    let frames: Vec<_> = seqs.iter().flat_map(|s| s.frames.iter()).map(normalize).collect();
    let refs: Vec<&emosr_core::image::Frame> = frames.iter().collect();
    let x = frames_to_batch::<f64>(&refs).unwrap();
    let model = build_emocnn::<f64>(1);
    let mut ws = emosr_core::nn::Workspace::new();
    let trace = model.net.forward_traced(&x, None, &mut ws).unwrap();
    let names = ["input","conv1","relu1","pool1","conv2","relu2","pool2","conv3","relu3","quad","flat","fc","relu_fc","drop","out"];
    for i in 0..=trace.n_layers() {
        let a = trace.activation(i);
        let rms = (a.data().iter().map(|v| v*v).sum::<f64>() / a.len() as f64).sqrt();
        println!("{:2} {:8} rms {:.4}", i, names.get(i).unwrap_or(&"?"), rms);
    }

    // Same for the SR network.
    let sr = emosr_core::models::build_srfcn::<f64>(1);
    let trace = sr.net.forward_traced(&x, None, &mut ws).unwrap();
    let names = ["input","conv1","relu1","conv2","relu2","conv3","relu3","out"];
    for i in 0..=trace.n_layers() {
        let a = trace.activation(i);
        let rms = (a.data().iter().map(|v| v*v).sum::<f64>() / a.len() as f64).sqrt();
        println!("SR {:2} {:8} rms {:.4}", i, names.get(i).unwrap_or(&"?"), rms);
    }
}
