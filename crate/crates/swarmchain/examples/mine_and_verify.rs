//! Per-node puzzles, full and partial proofs, one-hash verification, and the
//! sampled sessions the simulator uses instead of burning CPU.
//!
//! ```bash
//! cargo run --example mine_and_verify
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use swarmchain::pow::{derive_puzzle, min_partial_bits, sample_session, solve, verify};
use swarmchain::wire::Digest32;
use swarmchain::NodeId;

fn main() {
    let seed = Digest32::ZERO; // stands in for the previous block digest
    let difficulty = 12;

    // Distinct nodes get distinct puzzles for the same epoch seed.
    let a = derive_puzzle(&NodeId::new("alpha"), seed, difficulty);
    let b = derive_puzzle(&NodeId::new("beta"), seed, difficulty);
    assert_ne!(a.preimage(0), b.preimage(0));

    // Really hash: sequential nonces, stop at the first full solution.
    let session = solve(&a, u64::MAX, 100_000.0, 60.0);
    let proof = session.proof.as_ref().unwrap();
    println!(
        "live solve at difficulty {difficulty}: nonce {} after {} hashes, {} bits (full: {})",
        proof.nonce, session.hashes_attempted, proof.achieved_bits, proof.is_full
    );
    println!(
        "partial shares >= {} bits seen on the way: {}",
        min_partial_bits(difficulty),
        session.share_count
    );

    // Anyone can check the claim with exactly one hash.
    let bits = verify(&a, proof.nonce);
    println!("verify(nonce) recomputes {bits} bits");
    println!("verify(nonce+1) gives {} bits (tamper evident)", verify(&a, proof.nonce + 1));

    // The simulator draws sessions from the attempt model instead; a slow
    // node inside the timeout usually lands a partial proof only.
    let mut rng = ChaCha12Rng::seed_from_u64(42);
    println!("\nsampled sessions, difficulty 20, timeout 10 s:");
    for (name, rate) in [("fast", 561_000.0), ("slow", 9_000.0)] {
        let s = sample_session(&mut rng, 20, rate, 10.0, u64::MAX);
        match &s.proof {
            Some(p) if p.is_full => println!(
                "  {name} ({rate} h/s): full proof in {:.2} s, {} shares",
                s.elapsed, s.share_count
            ),
            Some(p) => println!(
                "  {name} ({rate} h/s): timeout, best partial {} bits, {} shares",
                p.achieved_bits, s.share_count
            ),
            None => println!("  {name} ({rate} h/s): no proof this epoch"),
        }
    }
}
