use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use super::*;

fn letters(n: usize) -> Universe {
    Universe::from_names(
        (0..n).map(|i| ((b'A' + i as u8) as char).to_string()),
        AttributeClass::Road,
    )
    .unwrap()
}

fn ids(u: &Universe, names: &[&str]) -> BTreeSet<AttributeId> {
    names.iter().map(|n| u.id(n).unwrap()).collect()
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Random monotone tree over the given leaves.
fn random_policy(leaves: &mut Vec<AttributeId>, rng: &mut impl Rng) -> AccessPolicy {
    leaves.shuffle(rng);
    build_random(leaves, rng)
}

fn build_random(leaves: &[AttributeId], rng: &mut impl Rng) -> AccessPolicy {
    if leaves.len() == 1 {
        return AccessPolicy::Leaf(leaves[0]);
    }
    let groups = rng.gen_range(2..=leaves.len().min(4));
    let mut cuts: Vec<usize> = (1..leaves.len()).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(groups - 1).collect();
    cuts.sort_unstable();
    let mut children = Vec::new();
    let mut start = 0;
    for c in cuts.into_iter().chain(std::iter::once(leaves.len())) {
        children.push(build_random(&leaves[start..c], rng));
        start = c;
    }
    if rng.gen_bool(0.5) {
        AccessPolicy::And(children)
    } else {
        AccessPolicy::Or(children)
    }
}

#[test]
fn setup_counts_and_levels() {
    let u = letters(3);
    let (mk, pk) = setup(&u, SecurityLevel::new(80).unwrap(), &mut rng(1)).unwrap();
    assert_eq!(mk.attribute_count(), 3);
    assert_eq!(pk.attribute_count(), 3);
    assert!(u.ids().all(|a| mk.version(a) == Some(0) && pk.version(a) == Some(0)));
    assert!(SecurityLevel::new(128).is_err());
    assert!(SecurityLevel::new(0).is_err());
    assert_eq!(
        setup(&Universe::new(), SecurityLevel::BITS_80, &mut rng(1)).err(),
        Some(AbeError::EmptyUniverse)
    );
}

#[test]
fn independent_setups_differ_and_seeded_setups_repeat() {
    let u = letters(2);
    let ys: Vec<Gt> = (0..8)
        .map(|s| setup(&u, SecurityLevel::BITS_80, &mut rng(100 + s)).unwrap().1.y)
        .collect();
    for i in 0..ys.len() {
        for j in i + 1..ys.len() {
            assert_ne!(ys[i], ys[j]);
        }
    }
    let (mk1, pk1) = setup(&u, SecurityLevel::BITS_80, &mut rng(7)).unwrap();
    let (mk2, pk2) = setup(&u, SecurityLevel::BITS_80, &mut rng(7)).unwrap();
    assert_eq!(mk1.to_bytes(), mk2.to_bytes());
    assert_eq!(pk1.to_bytes(), pk2.to_bytes());
}

#[test]
fn encrypt_component_counts_and_errors() {
    let u = letters(5);
    let mut r = rng(2);
    let (_, pk) = setup(&u, SecurityLevel::BITS_80, &mut r).unwrap();
    let m = Payload::random(&mut r);
    let ct = encrypt(&m, &ids(&u, &["A", "C", "E"]), &pk, &mut r).unwrap();
    assert_eq!(ct.len(), 3);
    assert_eq!(ct.attributes(), ids(&u, &["A", "C", "E"]));
    let all: BTreeSet<_> = u.ids().collect();
    assert_eq!(encrypt(&m, &all, &pk, &mut r).unwrap().len(), 5);
    assert_eq!(
        encrypt(&m, &BTreeSet::new(), &pk, &mut r).err(),
        Some(AbeError::EmptyAttributeSet)
    );
    assert_eq!(
        encrypt(&m, &BTreeSet::from([AttributeId(9)]), &pk, &mut r).err(),
        Some(AbeError::UnknownAttribute(AttributeId(9)))
    );
}

#[test]
fn keygen_component_counts() {
    let u = letters(5);
    let mut r = rng(3);
    let (mk, _) = setup(&u, SecurityLevel::BITS_80, &mut r).unwrap();
    let policy = AccessPolicy::parse("A & (B | C | D)", &u).unwrap();
    let k1 = keygen(&mk, &policy, &mut r).unwrap();
    assert_eq!(k1.attributes(), ids(&u, &["A", "B", "C", "D"]));
    let k2 = keygen(&mk, &policy, &mut r).unwrap();
    for a in k1.attributes() {
        assert_ne!(k1.component(a), k2.component(a));
    }
    let single = keygen(&mk, &AccessPolicy::Leaf(u.id("B").unwrap()), &mut r).unwrap();
    assert_eq!(single.attributes().len(), 1);
    assert_eq!(
        keygen(&mk, &AccessPolicy::Leaf(AttributeId(40)), &mut r).err(),
        Some(AbeError::UnknownAttribute(AttributeId(40)))
    );
    assert!(matches!(
        keygen(&mk, &AccessPolicy::And(vec![]), &mut r),
        Err(AbeError::MalformedPolicy(_))
    ));
}

#[test]
fn decrypt_examples() {
    let u = letters(5);
    let mut r = rng(4);
    let (mk, pk) = setup(&u, SecurityLevel::BITS_80, &mut r).unwrap();
    let policy = AccessPolicy::parse("A & (B | C | D)", &u).unwrap();
    let dk = keygen(&mk, &policy, &mut r).unwrap();
    let m = Payload::random(&mut r);

    let ct = encrypt(&m, &ids(&u, &["A", "C", "E"]), &pk, &mut r).unwrap();
    assert_eq!(decrypt(&ct, &dk), Ok(m));

    let ct = encrypt(&m, &ids(&u, &["B", "C"]), &pk, &mut r).unwrap();
    assert_eq!(decrypt(&ct, &dk), Err(DecryptError::Unsatisfied));
    assert!(!eval_policy(&policy, &ids(&u, &["B", "C"])));

    let all_and = AccessPolicy::parse("A & B & C & D", &u).unwrap();
    let dk = keygen(&mk, &all_and, &mut r).unwrap();
    let ct = encrypt(&m, &all_and.attributes(), &pk, &mut r).unwrap();
    assert_eq!(decrypt(&ct, &dk), Ok(m));
}

#[test]
fn random_policies_match_boolean_oracle() {
    let u = letters(7);
    let mut r = rng(5);
    let (mk, pk) = setup(&u, SecurityLevel::BITS_80, &mut r).unwrap();
    for _ in 0..6 {
        let n = r.gen_range(1..=5);
        let mut leaves: Vec<AttributeId> = u.ids().collect();
        leaves.shuffle(&mut r);
        leaves.truncate(n);
        let policy = random_policy(&mut leaves, &mut r);
        let dk = keygen(&mk, &policy, &mut r).unwrap();
        let lambda: Vec<AttributeId> = policy.attributes().into_iter().collect();
        for mask in 1u32..(1 << lambda.len()) {
            let gamma: BTreeSet<_> = lambda
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, a)| *a)
                .collect();
            let m = Payload::random(&mut r);
            let ct = encrypt(&m, &gamma, &pk, &mut r).unwrap();
            let expected = eval_policy(&policy, &gamma);
            match decrypt(&ct, &dk) {
                Ok(got) => {
                    assert!(expected);
                    assert_eq!(got, m);
                }
                Err(e) => {
                    assert!(!expected);
                    assert_eq!(e, DecryptError::Unsatisfied);
                }
            }
        }
    }
}

#[test]
fn version_mismatch_is_reported_not_hidden() {
    let u = letters(3);
    let mut r = rng(6);
    let (mk, pk) = setup(&u, SecurityLevel::BITS_80, &mut r).unwrap();
    let policy = AccessPolicy::parse("A & B", &u).unwrap();
    let dk = keygen(&mk, &policy, &mut r).unwrap();
    let m = Payload::random(&mut r);
    let mut ct = encrypt(&m, &ids(&u, &["A", "B"]), &pk, &mut r).unwrap();
    let a = u.id("A").unwrap();
    let mut c = *ct.component(a).unwrap();
    c.version = 1;
    ct.set_component(a, c);
    assert_eq!(
        decrypt(&ct, &dk),
        Err(DecryptError::VersionMismatch {
            attribute: a,
            ciphertext_version: 1,
            key_version: 0
        })
    );
    // Relabeling alone does not change the algebra.
    assert_eq!(decrypt_ignoring_versions(&ct, &dk), Some(m));

    // A usable alternative branch with matching versions still decrypts.
    let either = AccessPolicy::parse("A | B", &u).unwrap();
    let dk = keygen(&mk, &either, &mut r).unwrap();
    assert_eq!(decrypt(&ct, &dk), Ok(m));
}

#[test]
fn spliced_keys_do_not_decrypt() {
    let u = letters(6);
    let mut r = rng(8);
    let (mk, pk) = setup(&u, SecurityLevel::BITS_80, &mut r).unwrap();
    for text in ["A & B & C", "(A | B) & (C | D) & E & F", "A & (B | (C & D)) & E"] {
        let policy = AccessPolicy::parse(text, &u).unwrap();
        let k1 = keygen(&mk, &policy, &mut r).unwrap();
        let k2 = keygen(&mk, &policy, &mut r).unwrap();
        let lambda: Vec<AttributeId> = policy.attributes().into_iter().collect();
        let m = Payload::random(&mut r);

        // Neither key decrypts: no splice does either.
        let missing: BTreeSet<_> = lambda[..lambda.len() - 1].iter().copied().collect();
        assert!(!policy.is_satisfied_by(&missing));
        let ct = encrypt(&m, &missing, &pk, &mut r).unwrap();
        // Both keys decrypt: only splices that agree with one key on the
        // leaves actually used may recover the payload.
        let full: BTreeSet<_> = lambda.iter().copied().collect();
        let ct_full = encrypt(&m, &full, &pk, &mut r).unwrap();
        assert_eq!(decrypt(&ct_full, &k1), Ok(m));
        assert_eq!(decrypt(&ct_full, &k2), Ok(m));

        for mask in 0u32..(1 << lambda.len()) {
            let comps = lambda
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let src = if mask & (1 << i) != 0 { &k2 } else { &k1 };
                    (*a, *src.component(*a).unwrap())
                })
                .collect();
            let spliced = DecryptionKey::from_parts(policy.clone(), comps).unwrap();
            assert_eq!(decrypt(&ct, &spliced), Err(DecryptError::Unsatisfied));

            let present = |a: AttributeId| full.contains(&a);
            let used: Vec<usize> = plan(&policy, &present)
                .unwrap()
                .iter()
                .map(|(a, _)| lambda.iter().position(|x| x == a).unwrap())
                .collect();
            let from_k2 = used.iter().filter(|i| mask & (1 << **i) != 0).count();
            let pure = from_k2 == 0 || from_k2 == used.len();
            assert_eq!(decrypt(&ct_full, &spliced) == Ok(m), pure, "{text} mask {mask:b}");
        }
    }
}

#[test]
fn encodings_round_trip() {
    let u = letters(4);
    let mut r = rng(9);
    let (mk, pk) = setup(&u, SecurityLevel::BITS_80, &mut r).unwrap();
    let policy = AccessPolicy::parse("(A | B) & C & D", &u).unwrap();
    let dk = keygen(&mk, &policy, &mut r).unwrap();
    let m = Payload::random(&mut r);
    let ct = encrypt(&m, &ids(&u, &["A", "C", "D"]), &pk, &mut r).unwrap();

    assert_eq!(MasterKey::from_bytes(&mk.to_bytes()).unwrap(), mk);
    assert_eq!(PublicParams::from_bytes(&pk.to_bytes()).unwrap(), pk);
    let ct_bytes = ct.to_bytes();
    assert_eq!(ct_bytes.len(), ct.encoded_len());
    assert_eq!(Ciphertext::from_bytes(&ct_bytes).unwrap(), ct);
    let dk_bytes = dk.to_bytes();
    assert_eq!(dk_bytes.len(), decryption_key_encoded_len(&policy));
    let back = DecryptionKey::from_bytes(&dk_bytes).unwrap();
    assert_eq!(back, dk);
    assert_eq!(decrypt(&ct, &back), Ok(m));

    assert!(Ciphertext::from_bytes(&dk_bytes).is_err());
    assert!(DecryptionKey::from_bytes(&dk_bytes[..dk_bytes.len() - 1]).is_err());
    let mut extra = ct_bytes.clone();
    extra.push(0);
    assert!(Ciphertext::from_bytes(&extra).is_err());
}

#[test]
fn encrypt_time_is_linear_in_attribute_count() {
    let u = Universe::from_names((0..40).map(|i| format!("a{i}")), AttributeClass::Road).unwrap();
    let mut r = rng(10);
    let (_, pk) = setup(&u, SecurityLevel::BITS_80, &mut r).unwrap();
    let m = Payload::random(&mut r);
    let sizes = [10usize, 20, 40];
    let times: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            let gamma: BTreeSet<_> = u.ids().take(n).collect();
            (0..7)
                .map(|_| {
                    let t = Instant::now();
                    encrypt(&m, &gamma, &pk, &mut r).unwrap();
                    t.elapsed().as_secs_f64()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let xs: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let r2 = crate::citysim::stats::linear_fit(&xs, &times).r_squared;
    assert!(r2 >= 0.9, "R² = {r2}, times = {times:?}");
    assert!(times[2] > times[0]);
}
