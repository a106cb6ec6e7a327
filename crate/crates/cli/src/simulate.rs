use std::io::Write;
use std::path::PathBuf;

use sigpep_core::seqio::{write_annotated_fasta, write_fasta_record};
use sigpep_core::synth::{known_signal_peptides, motif_dataset, ScreeningGenerator, IMBALANCED_SPEC, OVERFIT_SPEC};

use crate::args::{SimulateArgs, SimulateKind};
use crate::error::{CliResult, OrExit};
use crate::inputs;

pub const TOY_FILE: &str = "toy.fasta";
pub const IMBALANCED_FILE: &str = "imbalanced.fasta";
pub const SCREEN_FILE: &str = "screen_input.fasta";
pub const KNOWN_FILE: &str = "known_sps.fasta";

/// Writes the requested synthetic set; returns the files written.
pub fn run(args: &SimulateArgs) -> CliResult<Vec<PathBuf>> {
    inputs::create_dir(&args.out)?;
    let write_err = |p: &PathBuf| format!("cannot write {}", p.display());
    match args.kind {
        SimulateKind::Toy | SimulateKind::Imbalanced => {
            let (name, spec): (_, &[_]) = match args.kind {
                SimulateKind::Toy => (TOY_FILE, &OVERFIT_SPEC),
                _ => (IMBALANCED_FILE, &IMBALANCED_SPEC),
            };
            let path = args.out.join(name);
            let mut w = inputs::create(&path)?;
            write_annotated_fasta(&mut w, &motif_dataset(spec, args.seed))
                .and_then(|_| w.flush())
                .or_input(write_err(&path))?;
            Ok(vec![path])
        }
        SimulateKind::Screen => {
            let path = args.out.join(SCREEN_FILE);
            let mut w = inputs::create(&path)?;
            for r in ScreeningGenerator::new(args.seed).take(args.n) {
                write_fasta_record(&mut w, &r.header(), &r.sequence).or_input(write_err(&path))?;
            }
            w.flush().or_input(write_err(&path))?;
            let known = args.out.join(KNOWN_FILE);
            let mut k = inputs::create(&known)?;
            for (i, sp) in known_signal_peptides(args.seed).iter().enumerate() {
                write_fasta_record(&mut k, &format!("known_{i}"), sp).or_input(write_err(&known))?;
            }
            k.flush().or_input(write_err(&known))?;
            Ok(vec![path, known])
        }
    }
}
