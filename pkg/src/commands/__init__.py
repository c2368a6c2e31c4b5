# Command-line subcommand handlers
