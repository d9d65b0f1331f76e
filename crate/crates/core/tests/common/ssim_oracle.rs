//! Reference SSIM shared by the metric tests and the acceptance runner.

/// Direct per-window SSIM: explicit 2-D Gaussian weights, no separability.
pub fn ssim_oracle(x: &[f64], y: &[f64], h: usize, w: usize) -> f64 {
    let win = 11;
    let mut g = vec![0.0; win * win];
    for a in 0..win {
        for b in 0..win {
            let (da, db) = (a as f64 - 5.0, b as f64 - 5.0);
            g[a * win + b] = (-(da * da + db * db) / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let gs: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= gs);
    let l = y.iter().cloned().fold(f64::MIN, f64::max);
    let (c1, c2) = ((0.01 * l).powi(2), (0.03 * l).powi(2));
    let mut acc = 0.0;
    let mut count = 0;
    for i in 0..=h - win {
        for j in 0..=w - win {
            let (mut mx, mut my) = (0.0, 0.0);
            for a in 0..win {
                for b in 0..win {
                    let k = (i + a) * w + j + b;
                    mx += g[a * win + b] * x[k];
                    my += g[a * win + b] * y[k];
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for a in 0..win {
                for b in 0..win {
                    let k = (i + a) * w + j + b;
                    let wt = g[a * win + b];
                    vx += wt * (x[k] - mx).powi(2);
                    vy += wt * (y[k] - my).powi(2);
                    cxy += wt * (x[k] - mx) * (y[k] - my);
                }
            }
            acc += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    acc / count as f64
}
