//! `varqpi` command-line front end.

mod app;
mod config;

fn main() {
    std::process::exit(app::main_with(std::env::args_os()));
}
