use std::io::Cursor;
use wigprop::field::{Frame, GridSpec, PhaseSpaceField};
use wigprop::harness::*;
use wigprop::{Error, PhasePoint};

fn bumpy(grid: GridSpec) -> PhaseSpaceField {
    PhaseSpaceField::from_fn(grid, |r| (-(r.p - 0.1).powi(2) * 20.0 - (r.q + 0.2).powi(2) * 30.0).exp() - 0.3 * (7.0 * r.q).sin() * r.p)
}

fn grid() -> GridSpec {
    GridSpec::new((-1.0, 1.0), 40, (-1.0, 1.0), 30).unwrap()
}

#[test]
fn identical_fields_compare_perfectly() {
    let a = bumpy(grid());
    let m = compare_fields(&a, &a, None).unwrap();
    assert_eq!(m.rel_l2, 0.0);
    assert!((m.pearson_corr - 1.0).abs() < 1e-12);
    assert_eq!(m.peak_offset_cells, (0, 0));
    assert_eq!(m.masked_fraction, 0.0);
}

#[test]
fn negated_field_anticorrelates() {
    let a = bumpy(grid());
    let mut b = a.clone();
    b.values.iter_mut().for_each(|v| *v = -*v);
    assert!((compare_fields(&a, &b, None).unwrap().pearson_corr + 1.0).abs() < 1e-12);
}

#[test]
fn one_cell_shift_in_p() {
    let g = grid();
    let mut a = PhaseSpaceField::zeros(g);
    let mut b = PhaseSpaceField::zeros(g);
    a.set(10, 12, 1.0);
    b.set(11, 12, 1.0);
    assert_eq!(compare_fields(&a, &b, None).unwrap().peak_offset_cells, (1, 0));
}

#[test]
fn masked_cells_are_ignored() {
    let g = grid();
    let a = bumpy(g);
    let mut b = a.clone();
    let mut mask = PhaseSpaceField::zeros(g);
    for i in 0..g.np {
        b.set(i, 3, 50.0);
        mask.set(i, 3, 1.0);
    }
    let m = compare_fields(&a, &b, Some(&mask)).unwrap();
    assert_eq!(m.rel_l2, 0.0);
    assert!((m.masked_fraction - 1.0 / g.nq as f64).abs() < 1e-15);
    assert!(compare_fields(&a, &b, None).unwrap().rel_l2 > 0.5);
}

#[test]
fn grid_mismatch_is_rejected() {
    let a = bumpy(grid());
    let b = bumpy(GridSpec::new((-1.0, 1.0), 40, (-1.0, 1.1), 30).unwrap());
    assert!(matches!(compare_fields(&a, &b, None), Err(Error::InvalidArgument(_))));
}

#[test]
fn text_round_trip_is_bit_identical() {
    let f = bumpy(grid()).with_frame(Frame::Local { center: PhasePoint::new(0.1, 1.0 / 3.0) });
    let mut buf = Vec::new();
    write_field_text(&f, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# ") && lines[0].ends_with(" 40"));
    assert!(lines[1].ends_with(" 30"));
    assert!(lines[2].starts_with("# frame local"));
    assert_eq!(lines.len(), 3 + 30);
    let back = read_field_text(Cursor::new(buf)).unwrap();
    assert_eq!(back, f);
    for (a, b) in back.values.iter().zip(&f.values) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn zero_field_is_white() {
    let f = PhaseSpaceField::zeros(GridSpec::new((0.0, 1.0), 2, (0.0, 1.0), 2).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let files = emit_field(&f, &dir.path().join("zero"), true, true).unwrap();
    assert_eq!(files.len(), 2);
    let img = std::fs::read(&files[1]).unwrap();
    let header = b"P6\n2 2\n255\n";
    assert_eq!(&img[..header.len()], header);
    assert!(img[header.len()..].iter().all(|&b| b == 255));
    assert_eq!(img.len(), header.len() + 12);
    let text = std::fs::read_to_string(&files[0]).unwrap();
    let zeros: Vec<f64> = text.lines().skip(3).flat_map(|l| l.split_whitespace().map(|x| x.parse::<f64>().unwrap())).collect();
    assert_eq!(zeros, vec![0.0; 4]);
}

#[test]
fn brightest_blue_sits_at_the_maximum() {
    let g = GridSpec::new((0.0, 1.0), 5, (0.0, 1.0), 4).unwrap();
    let mut f = PhaseSpaceField::zeros(g);
    f.set(3, 1, 2.0);
    f.set(0, 0, 0.5);
    let mut buf = Vec::new();
    write_ppm(&f, &mut buf).unwrap();
    let px = &buf[b"P6\n5 4\n255\n".len()..];
    // q grows upwards: cell row j is image row nq-1-j.
    let at = |i: usize, j: usize| {
        let k = 3 * ((g.nq - 1 - j) * g.np + i);
        [px[k], px[k + 1], px[k + 2]]
    };
    assert_eq!(at(3, 1), [0, 0, 255]);
    assert_eq!(at(0, 0), diverging_rgb(0.25));
}

#[test]
fn configs_validate_blocks_and_numbers() {
    let mut cfg = ScenarioConfig::preset("fig3-elliptic").unwrap();
    cfg.validate().unwrap();
    cfg.vanvleck = None;
    assert!(matches!(cfg.validate(), Err(Error::InvalidArgument(_))));
    let mut cfg = ScenarioConfig::preset("fig3-hyperbolic").unwrap();
    cfg.hbar = f64::NAN;
    assert!(cfg.validate().is_err());
    assert!(ScenarioConfig::preset("nope").is_err());
    assert!(ScenarioConfig::from_toml("name = \"x\"\nbogus = 1").is_err());
    let cfg = ScenarioConfig::preset("fig3-elliptic").unwrap();
    assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn module_errors_name_the_module() {
    let mut cfg = ScenarioConfig::preset("harmonic-liouville").unwrap();
    cfg.exact.as_mut().unwrap().n_grid = 40;
    let err = run_scenario(&cfg, false).err().unwrap();
    assert!(err.to_string().starts_with("exact"), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn harmonic_preset_collapses_to_the_classical_cell() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::preset("harmonic-liouville").unwrap();
    cfg.output.dir = dir.path().to_path_buf();
    let run = run_scenario(&cfg, true).unwrap();
    let m = &run.manifest;
    assert_eq!(m.fields.len(), 3);
    let cell = m.fields[0].r_cl_cell.unwrap();
    for e in &m.fields {
        assert_eq!(e.peak_cell, cell, "{:?}", e.method);
    }
    assert_eq!(m.comparisons.len(), 3);
    for c in &m.comparisons {
        assert!(c.metrics.pearson_corr >= 0.99, "{:?} vs {:?}: {:?}", c.a, c.b, c.metrics);
    }

    // The manifest alone reproduces the run, byte for byte in the grids.
    let again = ScenarioConfig::load(run.manifest_path.as_ref().unwrap()).unwrap();
    assert_eq!(again, cfg);
    let dir2 = tempfile::tempdir().unwrap();
    let mut again = again;
    again.output.dir = dir2.path().to_path_buf();
    run_scenario(&again, true).unwrap();
    for name in ["exact.txt", "pathint.txt", "vanvleck.txt", "trajectory.txt"] {
        let a = std::fs::read(dir.path().join(name)).unwrap();
        let b = std::fs::read(dir2.path().join(name)).unwrap();
        assert!(a == b, "{name} differs between runs");
    }
}

#[test]
fn time_sweeps_write_one_file_per_time() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::preset("fig3-hyperbolic").unwrap();
    cfg.times = Some(vec![0.25, 0.5]);
    cfg.output.dir = dir.path().to_path_buf();
    let run = run_scenario(&cfg, true).unwrap();
    for name in ["pathint_t0.25.txt", "pathint_t0.5.txt", "pathint_t0.25.ppm", "trajectory_t0.5.txt"] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    let a = read_field(&dir.path().join("pathint_t0.25.txt")).unwrap();
    assert_eq!(&a, run.field(Method::Pathint, 0.25).unwrap());
}
