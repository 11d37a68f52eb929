//! Stems checked against a reference implementation of the original
//! algorithm; the table was produced offline and frozen.

use contcomm_core::textprep::porter::stem;

#[test]
fn matches_reference_stemmer() {
    let table = include_str!("fixtures/porter_original.tsv");
    let mut mismatches = Vec::new();
    let mut n = 0;
    for line in table.lines() {
        let (word, expected) = line.split_once('\t').unwrap();
        n += 1;
        let got = stem(word);
        if got != expected {
            mismatches.push(format!("{word}: got {got}, want {expected}"));
        }
    }
    assert!(n > 2000);
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
}
