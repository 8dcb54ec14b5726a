use spectra_kde::*;
use std::time::Instant;

fn main() {
    let kernel = gaussian_kernel();
    // Timing: one (800, 3200) identity replicate.
    let t0 = Instant::now();
    let spec = simulate_spectrum(&EntryDistribution::ShiftedExponential, &PopulationSpec::Identity { p: 800 }, 800, 3200, 1).unwrap();
    println!("one (800,3200) identity replicate: {:?}", t0.elapsed());

    // Criterion 3 scale: sup distance on [0.35, 2.15].
    let h = bandwidth(&BandwidthRule::PaperDefault, 3200).unwrap();
    let reference = |x: f64| mp_density(0.25, x).unwrap();
    let d_big = sup_density_distance(&spec, &kernel, h, reference, (0.35, 2.15), 500).unwrap();
    let spec_small = simulate_spectrum(&EntryDistribution::ShiftedExponential, &PopulationSpec::Identity { p: 50 }, 50, 200, 1).unwrap();
    let h_small = bandwidth(&BandwidthRule::PaperDefault, 200).unwrap();
    let d_small = sup_density_distance(&spec_small, &kernel, h_small, reference, (0.35, 2.15), 500).unwrap();
    println!("sup dist: big = {d_big:.4}, small = {d_small:.4} (want big < 0.05 and big < small)");

    // Criterion 7: SIR kde vs oracle.
    let t0 = Instant::now();
    let source = TransformSource::Kde { spectrum: spec.clone(), kernel: kernel.clone(), h };
    let sir = mmse_sir_limit(&source, 1.0, 1.0).unwrap();
    println!("SIR kde = {sir:.6} vs oracle 0.5311288741 (diff {:.2e}) in {:?}", (sir - 0.5311288741492745).abs(), t0.elapsed());

    // Criterion 6 sampled: diagonal T, recover tr(T^2)/p.
    let t0 = Instant::now();
    let measure = DiscreteMeasure::new(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap();
    let population = PopulationSpec::Diagonal { measure, p: 800 };
    let spec_d = simulate_spectrum(&EntryDistribution::ShiftedExponential, &population, 800, 3200, 1).unwrap();
    println!("one (800,3200) diagonal replicate: {:?}", t0.elapsed());
    let t0 = Instant::now();
    let rec = recover_population(&spec_d, &kernel, h, 0.25, &ContourParams::default()).unwrap();
    println!("recovered m1 = {:.4}, m2 = {:.4} (oracle m2 = 2.5, 10% band [2.25, 2.75]); residual {:.2e}; clamped {}; in {:?}",
        rec.h_moments.0, rec.h_moments.1, rec.diagnostics.fit_residual, rec.diagnostics.variance_clamped, t0.elapsed());

    // Kolmogorov distances for criterion 5 scale.
    let law = SpectralLaw::marcenko_pastur(0.25).unwrap();
    let refcdf = ReferenceCdf::from_law(&law, 4001).unwrap();
    for (p, n) in [(50usize, 200usize), (200, 800), (800, 3200)] {
        let s = simulate_spectrum(&EntryDistribution::ShiftedExponential, &PopulationSpec::Identity { p }, p, n, 11).unwrap();
        let d = kolmogorov_distance(&s, |x| refcdf.eval(x));
        println!("KS distance at ({p},{n}) = {d:.4}");
    }
}
