//! The token ledger: linear fee schedule, lots, spending and demurrage.
//!
//! ```bash
//! cargo run --example fee_schedule
//! ```

use swarmchain::chain::{apply_demurrage, Accounts, ChainConfig};
use swarmchain::NodeId;

fn main() {
    let cfg = ChainConfig::default();

    println!("fee schedule: base {} + {}/byte", cfg.fee_base, cfg.fee_per_byte);
    println!("{:>14} {:>10}", "payload bytes", "fee");
    for payload in [0u64, 20, 1080, 2160, 4320, 8640] {
        println!("{:>14} {:>10}", payload, cfg.fee_for_payload(payload));
    }

    // A small account history: allowance lots age out after the demurrage
    // window, so tokens cannot be hoarded.
    let window = 3;
    let node = NodeId::new("rover");
    let mut accounts = Accounts::new();
    let account = accounts.entry(node.clone()).or_default();
    account.credit(1, 500_000);
    account.credit(2, 500_000);

    println!("\nwindow = {window} epochs");
    println!(
        "epoch 2: spendable {}",
        account.spendable(2, window)
    );

    let fee = cfg.fee_for_payload(4320);
    let breakdown = account.spend(fee, 2, window).unwrap();
    println!("epoch 2: paid {fee} for a 4320-byte exchange, from lots {breakdown:?}");

    for epoch in 3..=5 {
        let expired = apply_demurrage(&mut accounts, epoch, window);
        let left = accounts[&node].spendable(epoch, window);
        match expired.as_slice() {
            [] => println!("epoch {epoch}: nothing expired, spendable {left}"),
            lots => {
                let gone: u64 = lots.iter().map(|(_, _, a)| a).sum();
                println!("epoch {epoch}: {gone} tokens decayed, spendable {left}");
            }
        }
    }
}
