//! Print the pilot and per-explanation-type tables from the bundled replica
//! log sets.

use exag::analytics::replica::{table1_replica, table2_replica};
use exag::analytics::{table1_report, table2_report};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    print!("{}", table1_report(&table1_replica())?.to_text());
    println!();
    print!("{}", table2_report(&table2_replica())?.to_text());
    Ok(())
}
