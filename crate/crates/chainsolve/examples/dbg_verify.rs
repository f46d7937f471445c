fn main() {
    let args: Vec<String> = std::env::args().collect();
    for id in args[1..].iter() {
        chainsolve::verify::run_all(Some(id));
    }
}
