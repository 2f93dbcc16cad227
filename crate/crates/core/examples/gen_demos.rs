//! Generates train- and validation-style demonstration sets, writes them in the dataset
//! format and reads them back.
//!
//! cargo run --example gen_demos -- [out_dir]

use std::path::PathBuf;

use metamimic::demos::{generate_demos, load_dataset, save_dataset, StyleTag};
use metamimic::env::EnvConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("metamimic-demos"));
    std::fs::create_dir_all(&dir)?;
    let env = EnvConfig::default();
    for (style, n, seed) in [(StyleTag::Train, 20, 1), (StyleTag::Validation, 10, 2)] {
        let data = generate_demos(&env, n, style, seed)?;
        let path = dir.join(format!("{}.mmdm", style.name()));
        save_dataset(&path, &data)?;
        let back = load_dataset(&path, &env, false)?;
        let lengths: Vec<usize> = data.demos.iter().map(|d| d.len()).collect();
        println!(
            "{:<10} {} demos  mean length {:.1}  mean task return {:.2}  lengths {:?}",
            style.name(),
            data.len(),
            data.mean_length(),
            data.mean_cumulative_task_reward(),
            lengths
        );
        println!(
            "           {} ({} bytes), actions kept on a plain load: {}",
            path.display(),
            std::fs::metadata(&path)?.len(),
            back.has_actions()
        );
    }
    Ok(())
}
