// Copyright 2026 Compulse Contributors
// SPDX-License-Identifier: Apache-2.0

fn main() {
    std::process::exit(compulse::cli::main(std::env::args().collect()));
}
