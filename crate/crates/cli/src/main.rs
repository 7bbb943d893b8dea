fn main() {
    // Subcommands are wired up in cli.rs as the library modules land.
    eprintln!("ordhomeo: not yet wired");
    std::process::exit(2);
}
