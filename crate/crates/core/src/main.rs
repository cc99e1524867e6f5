fn main() {
    std::process::exit(sigma_arma::cli::main_entry());
}
