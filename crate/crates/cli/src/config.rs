//! `--config FILE` support: each `key = value` line becomes `--key value`
//! unless the flag is already on the command line.

use std::ffi::OsString;

use clap::CommandFactory;
use tuberepair::{Error, Result};

use crate::args::Cli;

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::InvalidArgument(format!("config line {}: expected key = value", n + 1)));
        };
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

pub fn merge_config_file(mut argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)?;
    let pairs = parse_pairs(&text)?;

    let cmd = Cli::command();
    let sub_name = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .find(|a| cmd.find_subcommand(a).is_some());
    let Some(sub_name) = sub_name else {
        return Ok(argv);
    };
    let sub = cmd.find_subcommand(&sub_name).expect("found above");
    let present = |key: &str| {
        argv.iter().any(|a| {
            let s = a.to_string_lossy();
            s == format!("--{key}") || s.starts_with(&format!("--{key}="))
        })
    };
    let mut extra = Vec::new();
    for (key, value) in pairs {
        if key == "config" || present(&key) {
            continue;
        }
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            return Err(Error::InvalidArgument(format!("config key {key:?} is not a flag of {sub_name}")));
        };
        if arg.get_action().takes_values() {
            extra.push(OsString::from(format!("--{key}")));
            extra.push(OsString::from(value));
        } else {
            match value.as_str() {
                "true" => extra.push(OsString::from(format!("--{key}"))),
                "false" => {}
                other => {
                    return Err(Error::InvalidArgument(format!("config key {key:?}: expected true or false, got {other:?}")))
                }
            }
        }
    }
    argv.extend(extra);
    Ok(argv)
}
