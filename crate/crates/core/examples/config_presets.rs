//! Lists the bundled presets, resolves one with overrides and prints the
//! manifest a run would record.
//!
//!     cargo run --example config_presets -- mnist train.mode=baseline run.seed=4

use ctxforge::config::{preset_names, ResolvedConfig};

fn main() -> ctxforge::Result<()> {
    println!("presets: {}", preset_names().join(", "));
    let mut args = std::env::args().skip(1);
    let preset = args.next().unwrap_or_else(|| "shapes".into());
    let overrides: Vec<(String, String)> = args
        .filter_map(|a| a.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();

    let cfg = ResolvedConfig::resolve(Some(&preset), None, &overrides)?;
    println!("{} / {} classes / mode {} / {} rounds", cfg.arch, cfg.classes, cfg.train.mode, cfg.train.total_rounds());
    println!("pgd: {} steps of {:.5}, eps_fg {} eps_bg {}", cfg.pgd.iterations, cfg.pgd.alpha, cfg.pgd.eps_fg, cfg.pgd.eps_bg);
    print!("{}", cfg.manifest());

    let typo = [("trian.epochs".to_string(), "3".to_string())];
    match ResolvedConfig::resolve(Some(&preset), None, &typo) {
        Ok(_) => println!("typo accepted?"),
        Err(e) => println!("misspelled key is rejected (exit {}): {e}", e.exit_code()),
    }
    Ok(())
}
