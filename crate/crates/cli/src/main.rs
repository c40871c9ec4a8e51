//! Command-line front end for the UBA model checker.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ubamc::automata::parse_automaton;
use ubamc::harness;
use ubamc::markov::parse_chain;
use ubamc::solver::{model_check, Method};
use ubamc::{Error, Tolerances};

#[derive(Parser)]
#[command(name = "ubamc", about = "Probabilistic model checking against unambiguous Büchi automata", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TolArgs {
    /// Tolerance override(s) as key=value; keys: stochastic, rank,
    /// residual, positivity, independence, orthogonality, agreement.
    #[arg(long = "tol", value_name = "KEY=VALUE")]
    tol: Vec<String>,
}

impl TolArgs {
    fn build(&self) -> Result<Tolerances, Error> {
        let mut t = Tolerances::default();
        for spec in &self.tol {
            let (key, value) = spec
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("expected KEY=VALUE, got '{spec}'")))?;
            let v: f64 = value
                .parse()
                .map_err(|_| Error::Invalid(format!("bad tolerance value '{value}'")))?;
            if !(v > 0.0) {
                return Err(Error::Invalid(format!("tolerance '{key}' must be positive")));
            }
            match key {
                "stochastic" => t.stochastic = v,
                "rank" => t.rank = v,
                "residual" => t.residual = v,
                "positivity" => t.positivity = v,
                "independence" => t.independence = v,
                "orthogonality" => t.orthogonality = v,
                "agreement" => t.agreement = v,
                other => return Err(Error::Invalid(format!("unknown tolerance '{other}'"))),
            }
        }
        Ok(t)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute the probability that the chain emits a word the automaton
    /// accepts.
    Check {
        /// Automaton JSON file.
        #[arg(short = 'a', long)]
        automaton: PathBuf,
        /// Markov chain JSON file.
        #[arg(short = 'm', long)]
        chain: PathBuf,
        /// Normaliser algorithm.
        #[arg(long, default_value = "pseudo", value_parser = parse_method)]
        method: Method,
        #[command(flatten)]
        tol: TolArgs,
        /// Emit the full result as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Check an automaton for unambiguity.
    Verify {
        #[arg(short = 'a', long)]
        automaton: PathBuf,
    },
    /// Time the normaliser algorithms on a generated instance family.
    Bench {
        #[arg(long, default_value = "quadratic")]
        family: String,
        /// Range of family parameters, inclusive (e.g. 1..4).
        #[arg(long = "n-range", default_value = "1..3")]
        n_range: String,
        #[arg(long, default_value = "both", value_parser = parse_method)]
        method: Method,
        /// Write the CSV report here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Generate an instance automaton.
    Generate {
        #[arg(long, default_value = "quadratic")]
        family: String,
        /// Family parameter (tree depth for quadratic, state count for
        /// random).
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        letters: usize,
        #[arg(long, default_value_t = 0.25)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file (stdout if omitted).
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn read(path: &PathBuf) -> Result<String, Error> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))
}

fn parse_range(spec: &str) -> Result<(usize, usize), Error> {
    let (lo, hi) = spec
        .split_once("..")
        .ok_or_else(|| Error::Invalid(format!("expected LO..HI, got '{spec}'")))?;
    let lo = lo.parse().map_err(|_| Error::Invalid(format!("bad range start '{lo}'")))?;
    let hi = hi.parse().map_err(|_| Error::Invalid(format!("bad range end '{hi}'")))?;
    if lo == 0 || hi < lo {
        return Err(Error::Invalid(format!("empty or invalid range '{spec}'")));
    }
    Ok((lo, hi))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Check {
            automaton,
            chain,
            method,
            tol,
            json,
        } => {
            let tol = tol.build()?;
            let a = parse_automaton(&read(&automaton)?)?;
            let (m, iota) = parse_chain(&read(&chain)?)?;
            let result = model_check(&a, &m, &iota, method, &tol)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&result).unwrap());
            } else {
                println!(
                    "probability = {:.12} (method {}, residual {:.3e})",
                    result.probability, result.method, result.residual
                );
            }
            Ok(())
        }
        Command::Verify { automaton } => {
            let a = parse_automaton(&read(&automaton)?)?;
            a.verify_unambiguous().check()?;
            println!("unambiguous");
            Ok(())
        }
        Command::Bench {
            family,
            n_range,
            method,
            csv,
            tol,
        } => {
            let tol = tol.build()?;
            let (lo, hi) = parse_range(&n_range)?;
            if family != "quadratic" {
                return Err(Error::Invalid(format!("unknown bench family '{family}'")));
            }
            let ns: Vec<usize> = (lo..=hi).collect();
            let instances = harness::quadratic_instances(&ns);
            let methods = match method {
                Method::Both => vec![Method::Cut, Method::Pseudo],
                single => vec![single],
            };
            let rows = harness::benchmark(&instances, &methods, &tol)?;
            let report = harness::rows_to_csv(&rows);
            match csv {
                Some(path) => std::fs::write(&path, report)
                    .map_err(|e| Error::Invalid(format!("cannot write {}: {e}", path.display())))?,
                None => print!("{report}"),
            }
            Ok(())
        }
        Command::Generate {
            family,
            n,
            letters,
            density,
            seed,
            output,
        } => {
            let a = match family.as_str() {
                "quadratic" => harness::quadratic_family(n),
                "random" => harness::generate_random_uba(seed, n, letters, density)
                    .ok_or_else(|| {
                        Error::Invalid("gave up generating an unambiguous instance".into())
                    })?,
                other => return Err(Error::Invalid(format!("unknown family '{other}'"))),
            };
            let text = a.to_json();
            match output {
                Some(path) => std::fs::write(&path, text)
                    .map_err(|e| Error::Invalid(format!("cannot write {}: {e}", path.display())))?,
                None => println!("{text}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
