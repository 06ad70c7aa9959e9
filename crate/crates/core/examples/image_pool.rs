//! Generate a synthetic pool, write it to disk, load it back and draw image
//! sets for both game settings.
//!
//!     cargo run --example image_pool -- /tmp/pool

use exag::catalog::synth::{generate_pool, SynthParams};
use exag::catalog::{load_catalog, select_image_set, set_difficulty, write_catalog, FeatureFormat};
use exag::engine::{SETTING_A_BAND, SETTING_A_IMAGES, SETTING_B_BAND, SETTING_B_IMAGES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("exag-pool").display().to_string());
    let pool = generate_pool(&SynthParams::default());
    write_catalog(&pool, &dir, FeatureFormat::Binary)?;
    let catalog = load_catalog(&dir)?;
    println!("{} images of dimension {} in {dir}", catalog.len(), catalog.dim());

    for (name, n, band) in [("A", SETTING_A_IMAGES, SETTING_A_BAND), ("B", SETTING_B_IMAGES, SETTING_B_BAND)] {
        let set = select_image_set(&catalog, None, n, band, 42)?;
        println!(
            "setting {name}: secret {} among {} images, difficulty {:.3} (recomputed {:.3}), band [{:.2}, {:.2}]",
            set.secret_id,
            set.len(),
            set.difficulty,
            set_difficulty(&set, &catalog)?,
            set.band.lo,
            set.band.hi
        );
    }
    Ok(())
}
