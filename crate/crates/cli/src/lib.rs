//! File formats, manifests, run configuration, and the `priornet`
//! command-line surface. The numeric work all lives in `priornet-core`;
//! this crate owns everything that touches the filesystem.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod ppm;
pub mod report;

pub use error::CliError;

const USAGE: &str = "\
usage: priornet <command> [options]

commands:
  synth   --manifest M --config C --out DIR     synthesize hazy images from clean/depth pairs
  train   --manifest M --config C --out W.prnw  train and write weights plus a loss CSV
  dehaze  --weights W (--in IMG.ppm --out OUT.ppm | --manifest M --out DIR)
  eval    --weights W --manifest M --report R.csv
  dcp     (--in IMG.ppm --out OUT.ppm | --manifest M --report R.csv [--out DIR])
  info    --weights W

manifests are tab-separated: hazy<TAB>clean for train/eval,
clean<TAB>depth for synth; lines starting with # are comments.
";

/// Dispatch a full argument vector (without argv[0]).
pub fn run(args: &[String]) -> Result<(), CliError> {
    let Some((command, rest)) = args.split_first() else {
        return Err(CliError::Usage(USAGE.into()));
    };
    let opts = Options::parse(rest)?;
    match command.as_str() {
        "synth" => commands::synth(
            &opts.require("manifest")?,
            &opts.require("config")?,
            &opts.require("out")?,
        ),
        "train" => commands::train(
            &opts.require("manifest")?,
            &opts.require("config")?,
            &opts.require("out")?,
        ),
        "dehaze" => commands::dehaze(
            &opts.require("weights")?,
            opts.get("in"),
            opts.get("manifest"),
            &opts.require("out")?,
        ),
        "eval" => commands::eval(
            &opts.require("weights")?,
            &opts.require("manifest")?,
            &opts.require("report")?,
        ),
        "dcp" => commands::dcp(
            opts.get("in"),
            opts.get("manifest"),
            opts.get("out"),
            opts.get("report"),
        ),
        "info" => commands::info(&opts.require("weights")?),
        "help" | "--help" | "-h" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(CliError::Usage(format!(
            "unknown command `{other}`\n{USAGE}"
        ))),
    }
}

/// `--key value` pairs; every command takes only long options.
struct Options {
    pairs: Vec<(String, String)>,
}

impl Options {
    fn parse(args: &[String]) -> Result<Self, CliError> {
        let mut pairs = Vec::new();
        let mut it = args.iter();
        while let Some(flag) = it.next() {
            let Some(key) = flag.strip_prefix("--") else {
                return Err(CliError::Usage(format!(
                    "expected an option, found `{flag}`\n{USAGE}"
                )));
            };
            let Some(value) = it.next() else {
                return Err(CliError::Usage(format!("option --{key} needs a value")));
            };
            if pairs.iter().any(|(k, _)| k == key) {
                return Err(CliError::Usage(format!("option --{key} given twice")));
            }
            pairs.push((key.to_string(), value.to_string()));
        }
        Ok(Self { pairs })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<String, CliError> {
        self.get(key)
            .map(String::from)
            .ok_or_else(|| CliError::Usage(format!("missing required option --{key}\n{USAGE}")))
    }
}
