use super::{dft2_centered, idft2_centered, CoilSensitivities, ComplexImage, KSpace, MriError, SamplingMask};
use crate::autodiff::LinearMap;
use crate::par;

fn check_geometry(h: usize, w: usize, sens: &CoilSensitivities, mask: &SamplingMask) -> Result<(), MriError> {
    if sens.height() != h || sens.width() != w {
        return Err(MriError::Extent(format!(
            "image is {h}x{w} but coil maps are {}x{}",
            sens.height(),
            sens.width()
        )));
    }
    if mask.height() != h || mask.width() != w {
        return Err(MriError::Extent(format!(
            "image is {h}x{w} but mask is {}x{}",
            mask.height(),
            mask.width()
        )));
    }
    Ok(())
}

fn complex_mul(a: &ComplexImage, b: &ComplexImage, conj_a: bool) -> ComplexImage {
    let s = if conj_a { -1.0 } else { 1.0 };
    let mut out = ComplexImage::zeros(a.height(), a.width());
    for k in 0..a.len() {
        let (ar, ai) = (a.re()[k], s * a.im()[k]);
        let (br, bi) = (b.re()[k], b.im()[k]);
        out.re_mut()[k] = ar * br - ai * bi;
        out.im_mut()[k] = ar * bi + ai * br;
    }
    out
}

fn apply_mask(img: &mut ComplexImage, mask: &SamplingMask) {
    let w = img.width();
    for k in 0..img.len() {
        if !mask.columns()[k % w] {
            img.re_mut()[k] = 0.0;
            img.im_mut()[k] = 0.0;
        }
    }
}

/// `y_i = M ⊙ F(S_i ⊙ x)` for every coil.
pub fn forward_operator(x: &ComplexImage, sens: &CoilSensitivities, mask: &SamplingMask) -> Result<KSpace, MriError> {
    check_geometry(x.height(), x.width(), sens, mask)?;
    let coils = par::map(sens.count(), |i| {
        let mut k = dft2_centered(&complex_mul(&sens.coils()[i], x, false));
        apply_mask(&mut k, mask);
        k
    });
    KSpace::new(coils)
}

/// `Σ_i conj(S_i) ⊙ F⁻¹(M ⊙ y_i)`.
pub fn adjoint_operator(y: &KSpace, sens: &CoilSensitivities, mask: &SamplingMask) -> Result<ComplexImage, MriError> {
    if y.count() != sens.count() {
        return Err(MriError::CoilCount { expected: sens.count(), got: y.count() });
    }
    check_geometry(y.height(), y.width(), sens, mask)?;
    let per_coil = par::map(y.count(), |i| {
        let mut masked = y.coils()[i].clone();
        apply_mask(&mut masked, mask);
        complex_mul(&sens.coils()[i], &idft2_centered(&masked), true)
    });
    // summed in coil order so both paths agree bit for bit
    let mut acc = ComplexImage::zeros(y.height(), y.width());
    for img in &per_coil {
        for k in 0..acc.len() {
            acc.re_mut()[k] += img.re()[k];
            acc.im_mut()[k] += img.im()[k];
        }
    }
    Ok(acc)
}

/// Pixelwise `sqrt(Σ_i |z_i|²)`.
pub fn rss_combine(coil_images: &[ComplexImage]) -> Result<Vec<f64>, MriError> {
    let first = coil_images.first().ok_or(MriError::NoCoils)?;
    if coil_images.iter().any(|c| !c.same_extent(first)) {
        return Err(MriError::Extent("coil images differ in extent".into()));
    }
    let mut acc = vec![0.0; first.len()];
    for c in coil_images {
        for (a, (r, i)) in acc.iter_mut().zip(c.re().iter().zip(c.im())) {
            *a += r * r + i * i;
        }
    }
    Ok(acc.into_iter().map(f64::sqrt).collect())
}

/// RSS of the per-coil inverse DFTs of masked k-space.
pub fn zero_filled_recon(y: &KSpace, sens: &CoilSensitivities, mask: &SamplingMask) -> Result<Vec<f64>, MriError> {
    if y.count() != sens.count() {
        return Err(MriError::CoilCount { expected: sens.count(), got: y.count() });
    }
    check_geometry(y.height(), y.width(), sens, mask)?;
    let coils: Vec<ComplexImage> = y
        .coils()
        .iter()
        .map(|k| {
            let mut m = k.clone();
            apply_mask(&mut m, mask);
            idft2_centered(&m)
        })
        .collect();
    rss_combine(&coils)
}

/// The acquisition model as a graph operator: maps a `(1, 2, H, W)` image
/// (real and imaginary channels) to `(coils, 2, H, W)` masked k-space.
#[derive(Clone, Debug)]
pub struct MriOperator {
    sens: CoilSensitivities,
    mask: SamplingMask,
}

impl MriOperator {
    pub fn new(sens: CoilSensitivities, mask: SamplingMask) -> Result<Self, MriError> {
        check_geometry(sens.height(), sens.width(), &sens, &mask)?;
        Ok(Self { sens, mask })
    }

    pub fn sens(&self) -> &CoilSensitivities {
        &self.sens
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    fn image_from_planes(&self, x: &[f64]) -> ComplexImage {
        let n = self.sens.height() * self.sens.width();
        ComplexImage::from_parts(self.sens.height(), self.sens.width(), x[..n].to_vec(), x[n..2 * n].to_vec())
            .expect("planes sized by operator")
    }

    fn kspace_from_planes(&self, y: &[f64]) -> KSpace {
        let n = self.sens.height() * self.sens.width();
        let coils = (0..self.sens.count())
            .map(|c| {
                let off = 2 * c * n;
                ComplexImage::from_parts(
                    self.sens.height(),
                    self.sens.width(),
                    y[off..off + n].to_vec(),
                    y[off + n..off + 2 * n].to_vec(),
                )
                .expect("planes sized by operator")
            })
            .collect();
        KSpace::new(coils).expect("at least one coil")
    }
}

impl LinearMap for MriOperator {
    fn input_len(&self) -> usize {
        2 * self.sens.height() * self.sens.width()
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![self.sens.count(), 2, self.sens.height(), self.sens.width()]
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let img = self.image_from_planes(x);
        forward_operator(&img, &self.sens, &self.mask).expect("geometry checked").to_planes()
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let k = self.kspace_from_planes(y);
        let img = adjoint_operator(&k, &self.sens, &self.mask).expect("geometry checked");
        let mut out = img.re().to_vec();
        out.extend_from_slice(img.im());
        out
    }
}
