//! `pairings`: count — and on request enumerate — the contraction pairings
//! of a label set `{1, …, |J|}` admitted by a combinatorial class, and
//! compare the two block-restricted definitions.
//!
//! For the unrestricted class the count is checked against `(|J|−1)!!` on
//! the spot; odd sets count 0 by convention. Enumeration is capped at
//! |J| = 12 to keep output humane; counting is capped at |J| = 16.

use std::path::Path;
use std::process::ExitCode;

use renormlab_core::error::{Error, Result};
use renormlab_core::pairings::{
    class_count_report, count_pairings, enumerate_pairings, odd_double_factorial, PairingClass,
};
use renormlab_core::report::{write_json, RunMetadata};
use serde::Serialize;

use super::print_table;
use crate::PairingsArgs;

const COUNT_CAP: usize = 16;
const LIST_CAP: usize = 12;

#[derive(Serialize)]
struct Output {
    size: usize,
    class: PairingClass,
    count: u64,
    /// `(|J|−1)!!`, the unrestricted reference (even sizes).
    unrestricted_reference: Option<u64>,
    pairings: Option<Vec<Vec<(usize, usize)>>>,
}

fn parse_class(args: &PairingsArgs) -> Result<PairingClass> {
    if args.block_size == 0 {
        return Err(Error::ConfigError {
            key: "--block-size".into(),
            detail: "block size must be ≥ 1".into(),
        });
    }
    match args.class.as_str() {
        "all" => Ok(PairingClass::All),
        "no-consecutive" => Ok(PairingClass::NoConsecutivePairs),
        "block" => Ok(PairingClass::BlockRestricted {
            block_size: args.block_size,
        }),
        "block-no-parity" => Ok(PairingClass::BlockRestrictedNoParity {
            block_size: args.block_size,
        }),
        other => Err(Error::ConfigError {
            key: "--class".into(),
            detail: format!(
                "`{other}` is not one of all, no-consecutive, block, block-no-parity"
            ),
        }),
    }
}

pub fn run(args: &PairingsArgs, out: Option<&Path>) -> Result<ExitCode> {
    if let Some(blocks) = args.compare_definitions {
        let mut rows = Vec::new();
        for m in 1..=blocks {
            if args.block_size * m > COUNT_CAP {
                break;
            }
            let r = class_count_report(args.block_size, m);
            rows.push(vec![
                r.num_blocks.to_string(),
                (args.block_size * m).to_string(),
                r.with_parity_exclusion.to_string(),
                r.block_only.to_string(),
                r.difference.to_string(),
            ]);
        }
        println!(
            "block-restricted pairing counts, block size {} (definitions coincide iff the \
             difference is 0):",
            args.block_size
        );
        print_table(
            &["blocks", "labels", "with parity excl.", "block only", "difference"],
            &rows,
        );
        return Ok(ExitCode::SUCCESS);
    }

    let class = parse_class(args)?;
    if args.size > COUNT_CAP {
        return Err(Error::TooLarge {
            vertices: args.size,
            limit: COUNT_CAP,
        });
    }
    let labels: Vec<usize> = (1..=args.size).collect();
    let count = count_pairings(&labels, class);
    let reference = (args.size % 2 == 0).then(|| odd_double_factorial(args.size as u64 / 2) as u64);

    println!(
        "pairings of {{1, …, {}}} under {:?}: {count}",
        args.size, class
    );
    if args.size % 2 == 1 {
        println!("(odd set: no pairings exist, count 0 by convention)");
    }
    if let (PairingClass::All, Some(r)) = (class, reference) {
        assert_eq!(count, r, "unrestricted count must equal (|J|-1)!!");
        println!("matches the double-factorial reference (|J|-1)!! = {r}");
    }

    let listing = if args.list {
        if args.size > LIST_CAP {
            return Err(Error::TooLarge {
                vertices: args.size,
                limit: LIST_CAP,
            });
        }
        let all = enumerate_pairings(&labels, class);
        for p in &all {
            let body: Vec<String> = p
                .pairs()
                .iter()
                .map(|(a, b)| format!("({a} {b})"))
                .collect();
            println!("  {}", body.join(""));
        }
        Some(all.iter().map(|p| p.pairs().to_vec()).collect())
    } else {
        None
    };

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let output = Output {
            size: args.size,
            class,
            count,
            unrestricted_reference: reference,
            pairings: listing,
        };
        let meta = RunMetadata::new(&output.class, 0, "pairings")?;
        write_json(&dir.join("pairings.json"), &meta, &output)?;
        println!("report in {}", dir.join("pairings.json").display());
    }
    Ok(ExitCode::SUCCESS)
}
