fn main() {
    let out = std::path::PathBuf::from(std::env::args().nth(1).expect("out dir"));
    clue_data::generate_dataset(&clue_data::ClassCounts([1; 7]), 3, &Default::default(), &out).unwrap();
}
