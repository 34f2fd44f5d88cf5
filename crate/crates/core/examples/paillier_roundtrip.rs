//! Encrypts fixed-point gradients, sums them homomorphically the way a
//! passive party does, and decrypts the total at the key holder.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use vfboost::crypto::{keygen, FixedPointCodec};

fn main() -> vfboost::Result<()> {
    let keys = keygen(1024, 42)?;
    let pk = keys.public();
    let codec = FixedPointCodec::default();
    let mut rng = ChaCha20Rng::seed_from_u64(7);

    let grads = [0.25, -0.731, 0.0042, -0.5, 0.999];
    let start = std::time::Instant::now();
    let cts: Vec<_> = grads
        .iter()
        .map(|&g| Ok(pk.encrypt(codec.encode(g)?, &mut rng)))
        .collect::<vfboost::Result<_>>()?;
    println!("encrypted {} values in {:.2?}", cts.len(), start.elapsed());

    let mut sum = pk.zero();
    for ct in &cts {
        sum = pk.add(&sum, ct)?;
    }
    let total = codec.decode(keys.secret.decrypt(&sum)?);
    let expected: f64 = grads.iter().sum();
    println!("decrypted sum {total:.9}, plaintext sum {expected:.9}");
    println!("ciphertext is {} bits", sum.value.bits());
    Ok(())
}
