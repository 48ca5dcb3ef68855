fn main() {
    moranno::cli::main()
}
