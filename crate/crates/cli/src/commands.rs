//! Subcommand pipelines. Each returns the checks it ran plus scalar values for the manifest.

use std::collections::BTreeMap;
use std::io::Write;

use harmonium_core::cm::{solve_ermakov, WidthTrajectory};
use harmonium_core::density::{
    assemble_density, moshinsky_scattering_closed_form, scattering_factor, ScatteringFactor, CM_MASS, RM_MASS,
};
use harmonium_core::io::{
    save_field, save_kernel, save_wavefunction, write_field_csv, write_potential_csv, write_scattering_csv,
    write_series_csv, write_widths_csv, ResidualReport,
};
use harmonium_core::ks::{build_orbital, evaluation_mask, invert_potential, repropagate_check, velocity_field, KsOrbital};
use harmonium_core::response::{
    apply_resolvent, forward_response, numerical_chi_s, volterra_invert, volterra_resolvent, CausalKernel, ChiScenario,
    ResponseSeries,
};
use harmonium_core::rm::{
    propagate, solve_ground_state, FrequencyLaw, InteractionSpec, LineGrid, WavefunctionTrajectory,
};
use harmonium_core::virial::{
    continuity_residual, dvt_residual_interacting, dvt_residual_ks, hpt_check, interacting_kinetic_vector_field,
    interaction_force_term, kinetic_vector_field, ResidualField,
};
use harmonium_core::{
    integrate_radial, DensityTrajectory, Error, PotentialTrajectory, RadialField, Result, TimeGrid, TAIL_LIMIT,
};
use rayon::prelude::*;

use crate::config::Validated;
use crate::output::{CheckRecord, Sink};
use crate::Subcommand;

/// Mutable state of one run.
pub struct Run<'a> {
    pub cfg: &'a Validated,
    pub sink: Sink,
    pub checks: Vec<CheckRecord>,
    pub values: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl<'a> Run<'a> {
    pub fn new(cfg: &'a Validated) -> Self {
        Self {
            cfg,
            sink: Sink::new(cfg.out.clone()),
            checks: Vec::new(),
            values: BTreeMap::new(),
            warnings: cfg.warnings.clone(),
        }
    }

    /// Record `value ≤ tolerance[name]` if the check was requested.
    fn check(&mut self, name: &str, value: f64) {
        if self.cfg.wants(name) {
            let limit = self.cfg.tolerance(name);
            self.checks.push(CheckRecord {
                name: name.into(),
                value,
                limit,
                pass: value <= limit,
            });
        }
    }

    fn value(&mut self, name: &str, v: f64) {
        self.values.insert(name.into(), v);
    }

    fn save_field(&mut self, name: &str, field: &RadialField, quantity: &str) -> Result<()> {
        let paths = save_field(&self.sink.stem(name)?, field, quantity)?;
        self.sink.record(&paths)
    }

    fn save_residual(&mut self, name: &str, r: &ResidualField) -> Result<()> {
        self.sink.write(&format!("{name}.json"), |w| {
            serde_json::to_writer_pretty(&mut *w, &ResidualReport::new(name, r))?;
            w.push(b'\n');
            Ok(())
        })?;
        self.sink.write(&format!("{name}.csv"), |w| write_field_csv(w, &r.field))?;
        self.value(&format!("{name}_max_l2"), r.max_l2());
        self.value(&format!("{name}_max_linf"), r.max_linf());
        Ok(())
    }
}

pub fn execute(cmd: Subcommand, run: &mut Run) -> Result<()> {
    match cmd {
        Subcommand::GroundState => ground_state(run),
        Subcommand::Evolve => evolve(run),
        Subcommand::Density => density(run),
        Subcommand::Scattering => scattering(run),
        Subcommand::VerifyMoshinsky => verify_moshinsky(run),
        Subcommand::InvertKs => invert_ks(run),
        Subcommand::Roundtrip => roundtrip(run),
        Subcommand::CheckContinuity => check_continuity(run),
        Subcommand::CheckDvt => check_dvt(run),
        Subcommand::CheckDvtInteracting => check_dvt_interacting(run),
        Subcommand::CheckHpt => check_hpt(run),
        Subcommand::ExtractChi => extract_chi(run),
        Subcommand::CausalityRoundtrip => causality_roundtrip(run),
    }
}

fn relative_motion(cfg: &Validated) -> Result<WavefunctionTrajectory> {
    let raw = &cfg.raw;
    let (_, psi) = solve_ground_state(&raw.interaction, raw.frequency.omega0(), RM_MASS, &cfg.grid)?;
    propagate(&psi, &raw.interaction, &raw.frequency, &cfg.times, cfg.stride)
}

fn widths(cfg: &Validated) -> Result<WidthTrajectory> {
    solve_ermakov(&cfg.raw.frequency, CM_MASS, &cfg.times)?.thinned(cfg.stride)
}

struct Pair {
    width: WidthTrajectory,
    rm: WavefunctionTrajectory,
    density: DensityTrajectory,
}

fn pair(cfg: &Validated) -> Result<Pair> {
    let rm = relative_motion(cfg)?;
    let width = widths(cfg)?;
    let density = assemble_density(&width, &rm, &cfg.grid, &cfg.raw.quadrature)?;
    density.check_tail(TAIL_LIMIT)?;
    Ok(Pair { width, rm, density })
}

fn ground_state(run: &mut Run) -> Result<()> {
    let raw = &run.cfg.raw;
    let w0 = raw.frequency.omega0();
    let (e_rm, psi) = solve_ground_state(&raw.interaction, w0, RM_MASS, &run.cfg.grid)?;
    let e_cm = 1.5 * w0;
    run.value("e_rm", e_rm);
    run.value("e_cm", e_cm);
    run.value("e_total", e_rm + e_cm);
    let exact = match raw.interaction {
        InteractionSpec::None => Some(1.5 * w0),
        InteractionSpec::Moshinsky { k } => Some(1.5 * (w0 * w0 - k / RM_MASS).sqrt()),
        _ => None,
    };
    match exact {
        Some(e) => {
            run.value("e_rm_closed_form", e);
            run.check("energy", (e_rm - e).abs());
        }
        None => run
            .warnings
            .push("no closed-form relative-motion energy for this interaction; `energy` not checked".into()),
    }
    run.check("wavefunction_norm", (psi.norm() - 1.0).abs());
    let traj = WavefunctionTrajectory {
        grid: psi.grid,
        times: TimeGrid::snapshot(),
        mass: psi.mass,
        chi: vec![psi.chi],
    };
    let paths = save_wavefunction(&run.sink.stem("rm_ground_state")?, &traj)?;
    run.sink.record(&paths)
}

fn evolve(run: &mut Run) -> Result<()> {
    let rm = relative_motion(run.cfg)?;
    let width = widths(run.cfg)?;
    let drift = (0..rm.n_slices()).map(|k| (rm.norm(k) - 1.0).abs()).fold(0.0, f64::max);
    run.check("wavefunction_norm", drift);
    run.value("final_mean_s2", rm.mean_s2(rm.n_slices() - 1));
    run.value("final_cm_width", *width.a.last().unwrap());
    let paths = save_wavefunction(&run.sink.stem("rm_wavefunction")?, &rm)?;
    run.sink.record(&paths)?;
    run.sink.write("widths.csv", |w| write_widths_csv(w, &width))
}

fn density_checks(run: &mut Run, n: &DensityTrajectory) -> Result<()> {
    let mut norm_err: f64 = 0.0;
    let mut min = f64::INFINITY;
    for row in &n.values {
        norm_err = norm_err.max((integrate_radial(row, &n.grid)? - 2.0).abs());
        min = row.iter().cloned().fold(min, f64::min);
    }
    run.check("norm", norm_err);
    run.check("positivity", -min);
    run.value("min_density", min);
    run.value("tail_ratio", n.tail_ratio());
    Ok(())
}

fn density(run: &mut Run) -> Result<()> {
    let p = pair(run.cfg)?;
    density_checks(run, &p.density)?;
    run.save_field("density", &p.density, "density")
}

fn write_scattering(run: &mut Run, name: &str, f: &ScatteringFactor) -> Result<()> {
    run.sink.write(name, |w| write_scattering_csv(w, f))
}

fn scattering(run: &mut Run) -> Result<()> {
    let p = pair(run.cfg)?;
    let f = scattering_factor(&p.density, &run.cfg.kgrid)?;
    let n0 = f.f.iter().map(|row| (row[0] - 2.0).norm()).fold(0.0, f64::max);
    run.check("particle_number", n0);
    write_scattering(run, "scattering.csv", &f)
}

fn verify_moshinsky(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let InteractionSpec::Moshinsky { k } = cfg.raw.interaction else {
        return Err(Error::UnsupportedScope("verify-moshinsky needs the Moshinsky interaction".into()));
    };
    let kgrid = cfg.kgrid;
    let (numeric, closed) = rayon::join(
        || pair(cfg).and_then(|p| scattering_factor(&p.density, &kgrid)),
        || moshinsky_scattering_closed_form(&cfg.raw.frequency, k, &kgrid, &cfg.times),
    );
    let numeric = numeric?;
    let closed = closed?;
    let closed = ScatteringFactor {
        times: cfg.stored_times(),
        kgrid,
        f: closed.f.into_iter().step_by(cfg.stride).collect(),
    };
    let dev = numeric.max_deviation(&closed, kgrid.k_max)?;
    run.check("scattering", dev);
    run.value("max_half_deviation", dev);
    write_scattering(run, "scattering.csv", &numeric)?;
    write_scattering(run, "scattering_closed_form.csv", &closed)
}

struct Inversion {
    density: DensityTrajectory,
    orbital: KsOrbital,
    potential: PotentialTrajectory,
}

fn inversion(run: &mut Run) -> Result<Inversion> {
    let density = pair(run.cfg)?.density;
    let v = velocity_field(&density)?;
    let orbital = build_orbital(&density, &v)?;
    let potential = invert_potential(&orbital)?;
    run.save_field("velocity", &v.field, "velocity")?;
    run.sink.write("potential.csv", |w| write_potential_csv(w, &potential))?;
    Ok(Inversion {
        density,
        orbital,
        potential,
    })
}

fn invert_ks(run: &mut Run) -> Result<()> {
    let inv = inversion(run)?;
    let n = &inv.density;
    let mask = evaluation_mask(n, harmonium_core::ks::DENSITY_FLOOR)?;
    let mut worst: f64 = 0.0;
    for k in 0..n.values.len() {
        let peak = n.values[k].iter().cloned().fold(0.0, f64::max);
        let dens = inv.orbital.density(k);
        for j in 0..mask[k] {
            worst = worst.max((dens[j] - n.values[k][j]).abs() / peak);
        }
    }
    run.check("orbital", worst);
    run.save_field("density", n, "density")
}

fn roundtrip(run: &mut Run) -> Result<()> {
    let inv = inversion(run)?;
    let report = repropagate_check(&inv.potential, &inv.density)?;
    run.check("roundtrip", report.max_mismatch);
    run.value("max_mismatch", report.max_mismatch);
    let times = inv.density.times;
    run.sink.write("roundtrip.csv", |w| {
        writeln!(w, "t,mismatch")?;
        for (k, m) in report.mismatch.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", times.t(k), m)?;
        }
        Ok(())
    })
}

fn check_continuity(run: &mut Run) -> Result<()> {
    let n = pair(run.cfg)?.density;
    let v = velocity_field(&n)?;
    let r = continuity_residual(&n, &v)?;
    run.check("continuity", r.max_l2());
    run.save_residual("continuity_residual", &r)
}

fn check_dvt(run: &mut Run) -> Result<()> {
    let inv = inversion(run)?;
    let z = kinetic_vector_field(&inv.orbital)?;
    let r = dvt_residual_ks(&inv.density, &z, &inv.potential)?;
    run.check("dvt", r.max_l2());
    run.save_residual("dvt_residual", &r)
}

fn check_dvt_interacting(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let p = pair(cfg)?;
    let z = interacting_kinetic_vector_field(&p.width, &p.rm, &cfg.grid)?;
    let force = interaction_force_term(&p.width, &p.rm, &cfg.raw.interaction, &cfg.grid)?;
    let law = cfg.raw.frequency.clone();
    let v_ext = PotentialTrajectory::from_fn(cfg.grid, p.density.times, move |t, r| {
        let w = law.omega(t);
        0.5 * w * w * r * r
    });
    let r = dvt_residual_interacting(&p.density, &z, &force, &v_ext)?;
    run.check("dvt_interacting", r.max_l2());
    run.save_residual("dvt_interacting_residual", &r)
}

fn check_hpt(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let hpt = cfg.raw.hpt.as_ref().expect("validated");
    let grid = LineGrid::new(hpt.x_max, hpt.n_points)?;
    let report = hpt_check(&hpt.drive, &grid, &cfg.times, cfg.stride)?;
    run.check("hpt", report.max_deviation);
    run.value("max_deviation", report.max_deviation);
    if let Some(w) = &report.warning {
        run.warnings.push(w.clone());
    }
    run.sink.write("hpt.csv", |w| {
        writeln!(w, "t,x_classical,deviation")?;
        for ((t, x), d) in report.times.iter().zip(&report.x_classical).zip(&report.deviation) {
            writeln!(w, "{t:.16e},{x:.16e},{d:.16e}")?;
        }
        Ok(())
    })
}

fn extract_chi(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let chi = cfg.raw.chi.as_ref().expect("validated");
    let scenario = ChiScenario {
        grid: cfg.grid,
        times: cfg.times,
        protocol: cfg.raw.frequency.clone(),
        basis_stride: chi.basis_stride,
    };
    let columns = chi
        .perturbations()
        .par_iter()
        .map(|p| numerical_chi_s(&scenario, p))
        .collect::<Result<Vec<_>>>()?;
    let before = columns.iter().map(|c| c.max_before_perturbation()).fold(0.0, f64::max);
    let linearity = columns.iter().map(|c| c.step_change).fold(0.0, f64::max);
    run.check("causality", before);
    run.check("chi_linearity", linearity);
    for (i, col) in columns.iter().enumerate() {
        let name = format!("chi_column_{i}.csv");
        run.sink.write(&name, |w| {
            writeln!(w, "# impulse at site {} (r = {}), slice {}", col.perturbation.site, cfg.grid.r(col.perturbation.site), col.perturbation.slice)?;
            writeln!(w, "t,r,value")?;
            for (k, row) in col.values.iter().enumerate() {
                for (site, v) in col.sites.iter().zip(row) {
                    writeln!(w, "{:.16e},{:.16e},{:.16e}", col.times.t(k), cfg.grid.r(*site), v)?;
                }
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn causality_roundtrip(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let resp = cfg.raw.response.as_ref().expect("validated");
    let times = cfg.times;
    let kernel = resp.kernel;
    let drive = resp.drive;
    let chi = CausalKernel::from_scalar(times, move |t, tp| kernel.eval(t - tp));
    let v = ResponseSeries::from_scalar(times, move |t| drive.eval(t));
    let dn = forward_response(&chi, &v)?;
    let solved = volterra_invert(&chi, &dn)?;
    let err = solved.v.relative_sup_error(&v);
    run.check("volterra", err);
    run.value("volterra_error", err);
    run.value("volterra_residual", solved.residual);

    let mut audit = chi.audit();
    if times.n_steps() <= resp.resolvent_max_steps {
        let r = volterra_resolvent(&chi)?;
        let a = r.audit();
        audit.stored_upper_blocks += a.stored_upper_blocks;
        audit.max_upper = audit.max_upper.max(a.max_upper);
        let via = apply_resolvent(&r, &chi, &dn)?;
        run.check("resolvent", via.relative_sup_error(&solved.v));
        let paths = save_kernel(&run.sink.stem("resolvent")?, &r)?;
        run.sink.record(&paths)?;
        let paths = save_kernel(&run.sink.stem("kernel")?, &chi)?;
        run.sink.record(&paths)?;
    } else {
        run.warnings.push(format!(
            "{} steps exceed resolvent_max_steps = {}; resolvent path skipped",
            times.n_steps(),
            resp.resolvent_max_steps
        ));
    }
    // structural: any stored upper block or non-zero upper entry is a violation
    run.check("causality", audit.stored_upper_blocks as f64 + audit.max_upper);
    run.sink.write("drive.csv", |w| write_series_csv(w, &v, "v"))?;
    run.sink.write("response.csv", |w| write_series_csv(w, &dn, "dn"))?;
    run.sink.write("recovered.csv", |w| write_series_csv(w, &solved.v, "v"))
}
