//! Parses a CSV with an incomplete row and a missing bin, cleans it under
//! both policies and splits the result chronologically.

use std::path::Path;

use ntc::ingest::{chronological_split, clean, parse_csv, CleanPolicy};
use ntc::Topology;

const CSV: &str = "\
t,link_0,link_1
0,10,20
60,11,
120,12,22
240,14,24
300,15,25
360,16,26
420,17,27
";

fn main() -> ntc::Result<()> {
    let topology = Topology::bidirectional(2, &[(0, 1)])?;
    let raw = parse_csv(CSV, topology, Path::new("inline.csv"))?;
    println!("{} rows, bin step {:?} s", raw.num_rows(), raw.bin_step());

    for policy in [CleanPolicy::DropBinsWithGaps, CleanPolicy::FillPrevious] {
        let (dataset, report) = clean(&raw, policy)?;
        println!(
            "{policy:?}: {} bins kept, removed rows {:?}, filled rows {:?}, missing bins {:?}",
            dataset.num_bins(),
            report.removed_rows,
            report.filled_rows,
            report.missing_bins
        );
    }

    let (dataset, _) = clean(&raw, CleanPolicy::FillPrevious)?;
    let (train, test) = chronological_split(&dataset, 2, 0.5)?;
    println!("train bins {}, test bins {}", train.num_bins(), test.num_bins());
    Ok(())
}
