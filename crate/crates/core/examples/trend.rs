//! Prints the masked-region PSNR curve of one reconstruction on the default
//! phantom problem.
//!
//! cargo run --release --example trend -- A_2_full_64_3 1500 0 [gauss] [lip] [noise=SIGMA]

use priorforge::arch::ArchSpec;
use priorforge::recon::{phantom_problem, run_reconstruction_with, ProblemSpec, ReconConfig};
use priorforge::reg::{InputFilter, Sigma};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let label = args.first().map(String::as_str).unwrap_or("A_2_full_64_3");
    let iters: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let gauss = args.iter().any(|a| a == "gauss");
    let lip = args.iter().any(|a| a == "lip");
    let noise = args.iter().find_map(|a| a.strip_prefix("noise=").and_then(|v| v.parse().ok()));
    let mut problem = ProblemSpec { seed, ..ProblemSpec::default() };
    if let Some(n) = noise {
        problem.noise_sigma = n;
    }
    let data = phantom_problem(&problem).expect("problem");
    let mut cfg = ReconConfig::new(ArchSpec::parse_label(label, problem.size).expect("arch"));
    cfg.iterations = iters;
    cfg.seed = seed;
    if gauss {
        cfg.reg.input_filter = InputFilter::Gaussian { size: 3, sigma: Sigma::Fixed(1.0) };
    }
    if lip {
        cfg.reg.lipschitz = Some(1.0);
    }
    let t0 = std::time::Instant::now();
    let res = run_reconstruction_with(&cfg, &data, |r| {
        if r.iter % 50 == 0 {
            println!(
                "{:5} mae={:.4} psnr={:.2} masked={:.2} ssim={:.3} pen={:.3} t={:.1}s",
                r.iter,
                r.train_mae,
                r.psnr_full.unwrap_or(f64::NAN),
                r.psnr_masked.unwrap_or(f64::NAN),
                r.ssim.unwrap_or(f64::NAN),
                r.penalty,
                t0.elapsed().as_secs_f64()
            );
        }
    })
    .expect("recon");
    let peak = res.log.iter().filter_map(|r| r.psnr_masked).fold(f64::MIN, f64::max);
    let last = res.log.last().and_then(|r| r.psnr_masked).unwrap();
    let psnr = res.log.last().and_then(|r| r.psnr_full).unwrap();
    println!("peak_masked={peak:.3} final_masked={last:.3} drop={:.3} final_psnr={psnr:.3} params={}", peak - last, res.params);
}
