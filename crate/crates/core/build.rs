// Copyright 2026 Thermalsim Contributors
// SPDX-License-Identifier: Apache-2.0

//! Embeds `git describe` output as `THERMALSIM_GIT_DESCRIBE` when the source is a git checkout.

use std::process::Command;

fn main() {
    println!("cargo:rerun-if-changed=../../.git/HEAD");
    println!("cargo:rerun-if-changed=../../.git/index");
    let out = Command::new("git").args(["describe", "--always", "--dirty", "--tags"]).output();
    if let Ok(o) = out {
        if o.status.success() {
            let v = String::from_utf8_lossy(&o.stdout).trim().to_string();
            if !v.is_empty() {
                println!("cargo:rustc-env=THERMALSIM_GIT_DESCRIBE={} ({v})", env!("CARGO_PKG_VERSION"));
            }
        }
    }
}
