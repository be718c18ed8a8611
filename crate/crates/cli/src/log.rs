//! `LEVEL<TAB>stage<TAB>message` lines on stderr.

use std::fmt::Display;

pub fn info(stage: &str, msg: impl Display) {
    eprintln!("INFO\t{stage}\t{msg}");
}

pub fn warn(stage: &str, msg: impl Display) {
    eprintln!("WARN\t{stage}\t{msg}");
}

pub fn error(stage: &str, msg: impl Display) {
    eprintln!("ERROR\t{stage}\t{msg}");
}
