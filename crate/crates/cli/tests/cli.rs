use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rescodec::Latent;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rescodec"))
}

fn workdir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("rescodec-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_latent(dir: &Path, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Latent::standard_normal(&[3, 16], &mut rng);
    let p = dir.join("z0.lat");
    std::fs::write(&p, z.to_bytes()).unwrap();
    p
}

#[test]
fn oracle_decode_is_deterministic_and_exact() {
    let d = workdir("oracle");
    let z0 = write_latent(&d, 1);
    let bs = d.join("x.rslc");
    run(&["encode", "--in", s(&z0), "--step", "0.7", "--nr", "80", "--out", s(&bs)]);
    let blob = d.join("oracle.bin");
    for eta in ["0", "1"] {
        // The oracle is recorded for the container's eta.
        let bs_eta = d.join(format!("x{eta}.rslc"));
        run(&["encode", "--in", s(&z0), "--step", "0.7", "--nr", "80", "--eta", eta, "--out", s(&bs_eta)]);
        run(&["make-denoiser", "--kind", "oracle", "--z0", s(&z0), "--bitstream", s(&bs_eta), "--steps", "8", "--seed", "9", "--out", s(&blob)]);
        let (a, b) = (d.join("a.lat"), d.join("b.lat"));
        run(&["decode", "--in", s(&bs_eta), "--denoiser", s(&blob), "--steps", "8", "--seed", "9", "--out", s(&a)]);
        run(&["decode", "--in", s(&bs_eta), "--denoiser", s(&blob), "--steps", "8", "--seed", "9", "--out", s(&b)]);
        let (a, b) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(a, b);
        let got = Latent::from_bytes(&a).unwrap();
        let want = Latent::from_bytes(&std::fs::read(&z0).unwrap()).unwrap();
        assert!(got.max_abs_diff(&want).unwrap() <= 1e-6);
    }
}

#[test]
fn caption_survives_the_container() {
    let d = workdir("caption");
    let z0 = write_latent(&d, 2);
    let bs = d.join("x.rslc");
    let out = run(&[
        "encode", "--in", s(&z0), "--step", "1.0", "--nr", "30", "--out", s(&bs),
        "--caption", "A red  barn, surrounded by Trees!", "--index-mode", "fixed",
    ]);
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(line.starts_with("R="), "{line}");
    let g = d.join("g.bin");
    run(&["make-denoiser", "--kind", "gaussian", "--out", s(&g)]);
    let out = run(&["decode", "--in", s(&bs), "--denoiser", s(&g), "--out", s(&d.join("z.lat"))]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), line.trim_end());
    assert!(text.contains("caption: a red barn, surrounded by trees!"), "{text}");
}

#[test]
fn bdrate_of_identical_curves_is_zero() {
    let d = workdir("bd");
    let csv = d.join("a.csv");
    std::fs::write(
        &csv,
        "bpp,distortion,N_r,quant_step\n0.1,0.5,10,2\n0.2,0.3,10,1\n0.4,0.2,10,0.5\n0.8,0.1,10,0.25\n",
    )
    .unwrap();
    let out = run(&["bdrate", "--anchor", s(&csv), "--test", s(&csv)]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "0.000000\n");
}

#[test]
fn sweep_writes_csv_and_svg_deterministically() {
    let d = workdir("sweep");
    let cfg = d.join("sweep.cfg");
    std::fs::write(&cfg, "# small grid\ncount = 256\nquant_steps = 2.0, 1.0, 0.5, 0.25\nn_r_grid = 2, 20, 100\n").unwrap();
    let (a, b, svg) = (d.join("a.csv"), d.join("b.csv"), d.join("s.svg"));
    let o1 = run(&["sweep", "--config", s(&cfg), "--out", s(&a), "--svg", s(&svg), "--seed", "3"]);
    let o2 = run(&["sweep", "--config", s(&cfg), "--out", s(&b), "--seed", "3"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(o1.stdout, o2.stdout);
    let csv = std::fs::read_to_string(&a).unwrap();
    assert!(csv.starts_with("bpp,distortion,N_r,quant_step\n"));
    assert_eq!(csv.lines().count(), 1 + 12);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    // The sweep output feeds bdrate directly.
    let out = run(&["bdrate", "--anchor", s(&a), "--test", s(&b)]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "0.000000\n");
}

#[test]
fn schedule_dump_respects_config() {
    let d = workdir("sched");
    let cfg = d.join("s.cfg");
    std::fs::write(&cfg, "schedule = linear\nsteps = 10\nbeta_start = 0.1\nbeta_end = 0.2\n").unwrap();
    let out = String::from_utf8(run(&["schedule-dump", "--config", s(&cfg)]).stdout).unwrap();
    assert_eq!(out.lines().count(), 1 + 11);
    assert!(out.lines().nth(1).unwrap().starts_with("0,"));
    assert!(out.lines().nth(2).unwrap().starts_with("1,1.0"));
}

#[test]
fn pfo_demo_is_seeded() {
    let d = workdir("pfo");
    let cfg = d.join("p.cfg");
    std::fs::write(&cfg, "iterations = 50\ntarget = calm pond\n").unwrap();
    let a = run(&["pfo-demo", "--config", s(&cfg), "--seed", "2"]).stdout;
    let b = run(&["pfo-demo", "--config", s(&cfg), "--seed", "2"]).stdout;
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.contains("target: calm pond"), "{text}");
}

#[test]
fn srr_reads_files_and_reports_endpoint_errors() {
    let d = workdir("srr");
    let full = d.join("full.txt");
    std::fs::write(&full, "A red barn surrounded by trees, reflected in a pond.\n").unwrap();
    let arg = format!("@{}", s(&full));
    let out = run(&["srr", "--full", &arg, "--decoded", "red house surrounded by trees"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "A barn reflected in a pond.\n");
    let out = bin()
        .args(["srr", "--full", "a", "--decoded", "b", "--endpoint", "http://127.0.0.1:9/complete"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[captioner]: "));
}

#[test]
fn errors_are_one_machine_readable_line() {
    let d = workdir("errors");
    let z0 = write_latent(&d, 3);
    let bs = d.join("x.rslc");
    run(&["encode", "--in", s(&z0), "--step", "0.5", "--nr", "10", "--out", s(&bs)]);
    let mut bytes = std::fs::read(&bs).unwrap();
    bytes[0] = b'X';
    let bad = d.join("bad.rslc");
    std::fs::write(&bad, &bytes).unwrap();
    let g = d.join("g.bin");
    run(&["make-denoiser", "--kind", "gaussian", "--out", s(&g)]);
    let out = bin().args(["decode", "--in", s(&bad), "--denoiser", s(&g), "--out", s(&d.join("o"))]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8(out.stderr).unwrap(), "error[bad-magic]: bad magic\n");
    let out = bin().args(["encode", "--in", s(&z0), "--step", "0.5", "--nr", "2000", "--out", s(&bs)]).output().unwrap();
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error[invalid-range]: "));
    let out = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error[usage]: "));
}

#[test]
fn trained_mlp_blob_decodes() {
    let d = workdir("mlp");
    let z0 = write_latent(&d, 4);
    let bs = d.join("x.rslc");
    run(&["encode", "--in", s(&z0), "--step", "1.0", "--nr", "100", "--out", s(&bs)]);
    let m = d.join("m.bin");
    let out = run(&["make-denoiser", "--kind", "mlp", "--latent-dim", "4", "--train-steps", "50", "--seed", "1", "--out", s(&m)]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("train loss"));
    let z = d.join("z.lat");
    run(&["decode", "--in", s(&bs), "--denoiser", s(&m), "--steps", "5", "--out", s(&z)]);
    let got = Latent::from_bytes(&std::fs::read(&z).unwrap()).unwrap();
    assert_eq!(got.shape(), &[3, 16]);
    assert!(got.is_finite());
}
