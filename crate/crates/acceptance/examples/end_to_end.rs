//! Prints the synthetic end-to-end outcome as JSON.
//! Usage: `end_to_end [max_epochs] [patience]`.

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let max_epochs = args.first().copied().unwrap_or(15);
    let patience = args.get(1).copied().unwrap_or(max_epochs);
    let out = eegart_acceptance::end_to_end(&eegart_acceptance::corpus_spec(), &eegart_acceptance::train_plan(max_epochs, patience))
        .expect("end-to-end run");
    println!("{}", serde_json::to_string_pretty(&out).unwrap());
}
