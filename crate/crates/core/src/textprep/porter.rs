//! The original Porter suffix-stripping algorithm (1980 publication form,
//! without the later "logi"/"bli" revisions).

type Cond = fn(&[char]) -> bool;

fn is_consonant(w: &[char], i: usize) -> bool {
    match w[i] {
        'a' | 'e' | 'i' | 'o' | 'u' => false,
        'y' => i == 0 || !is_consonant(w, i - 1),
        _ => true,
    }
}

/// m in `[C](VC)^m[V]`.
fn measure(w: &[char]) -> usize {
    let mut m = 0;
    let mut prev_vowel = false;
    for i in 0..w.len() {
        let c = is_consonant(w, i);
        if c && prev_vowel {
            m += 1;
        }
        prev_vowel = !c;
    }
    m
}

fn has_vowel(w: &[char]) -> bool {
    (0..w.len()).any(|i| !is_consonant(w, i))
}

fn ends_double_consonant(w: &[char]) -> bool {
    let n = w.len();
    n >= 2 && w[n - 1] == w[n - 2] && is_consonant(w, n - 1)
}

/// `*o`: ends consonant-vowel-consonant, last not w, x or y.
fn ends_cvc(w: &[char]) -> bool {
    let n = w.len();
    n >= 3
        && is_consonant(w, n - 3)
        && !is_consonant(w, n - 2)
        && is_consonant(w, n - 1)
        && !matches!(w[n - 1], 'w' | 'x' | 'y')
}

fn ends_with(w: &[char], suffix: &str) -> bool {
    let n = suffix.chars().count();
    w.len() >= n && w[w.len() - n..].iter().copied().eq(suffix.chars())
}

fn m_pos(s: &[char]) -> bool {
    measure(s) > 0
}

fn m_gt1(s: &[char]) -> bool {
    measure(s) > 1
}

/// The first rule whose suffix matches decides the step, whether or not its
/// condition holds.
fn apply_rules(w: &mut Vec<char>, rules: &[(&str, &str, Cond)]) {
    for (suffix, repl, cond) in rules {
        if ends_with(w, suffix) {
            let stem_len = w.len() - suffix.chars().count();
            if cond(&w[..stem_len]) {
                w.truncate(stem_len);
                w.extend(repl.chars());
            }
            return;
        }
    }
}

fn step1a(w: &mut Vec<char>) {
    fn always(_: &[char]) -> bool {
        true
    }
    apply_rules(
        w,
        &[("sses", "ss", always), ("ies", "i", always), ("ss", "ss", always), ("s", "", always)],
    );
}

fn step1b(w: &mut Vec<char>) {
    if ends_with(w, "eed") {
        if m_pos(&w[..w.len() - 3]) {
            w.pop();
        }
        return;
    }
    let cut = if ends_with(w, "ed") && has_vowel(&w[..w.len() - 2]) {
        2
    } else if ends_with(w, "ing") && has_vowel(&w[..w.len() - 3]) {
        3
    } else {
        return;
    };
    w.truncate(w.len() - cut);
    if ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz") {
        w.push('e');
    } else if ends_double_consonant(w) {
        if !matches!(w[w.len() - 1], 'l' | 's' | 'z') {
            w.pop();
        }
    } else if measure(w) == 1 && ends_cvc(w) {
        w.push('e');
    }
}

fn step1c(w: &mut [char]) {
    if ends_with(w, "y") && has_vowel(&w[..w.len() - 1]) {
        let n = w.len();
        w[n - 1] = 'i';
    }
}

fn step2(w: &mut Vec<char>) {
    apply_rules(
        w,
        &[
            ("ational", "ate", m_pos),
            ("tional", "tion", m_pos),
            ("enci", "ence", m_pos),
            ("anci", "ance", m_pos),
            ("izer", "ize", m_pos),
            ("abli", "able", m_pos),
            ("alli", "al", m_pos),
            ("entli", "ent", m_pos),
            ("eli", "e", m_pos),
            ("ousli", "ous", m_pos),
            ("ization", "ize", m_pos),
            ("ation", "ate", m_pos),
            ("ator", "ate", m_pos),
            ("alism", "al", m_pos),
            ("iveness", "ive", m_pos),
            ("fulness", "ful", m_pos),
            ("ousness", "ous", m_pos),
            ("aliti", "al", m_pos),
            ("iviti", "ive", m_pos),
            ("biliti", "ble", m_pos),
        ],
    );
}

fn step3(w: &mut Vec<char>) {
    apply_rules(
        w,
        &[
            ("icate", "ic", m_pos),
            ("ative", "", m_pos),
            ("alize", "al", m_pos),
            ("iciti", "ic", m_pos),
            ("ical", "ic", m_pos),
            ("ful", "", m_pos),
            ("ness", "", m_pos),
        ],
    );
}

fn step4(w: &mut Vec<char>) {
    fn ion(s: &[char]) -> bool {
        m_gt1(s) && matches!(s.last(), Some('s' | 't'))
    }
    apply_rules(
        w,
        &[
            ("al", "", m_gt1),
            ("ance", "", m_gt1),
            ("ence", "", m_gt1),
            ("er", "", m_gt1),
            ("ic", "", m_gt1),
            ("able", "", m_gt1),
            ("ible", "", m_gt1),
            ("ant", "", m_gt1),
            ("ement", "", m_gt1),
            ("ment", "", m_gt1),
            ("ent", "", m_gt1),
            ("ion", "", ion),
            ("ou", "", m_gt1),
            ("ism", "", m_gt1),
            ("ate", "", m_gt1),
            ("iti", "", m_gt1),
            ("ous", "", m_gt1),
            ("ive", "", m_gt1),
            ("ize", "", m_gt1),
        ],
    );
}

fn step5(w: &mut Vec<char>) {
    if ends_with(w, "e") {
        let stem = &w[..w.len() - 1];
        let m = measure(stem);
        if m > 1 || (m == 1 && !ends_cvc(stem)) {
            w.pop();
        }
    }
    if ends_with(w, "ll") && measure(&w[..w.len() - 1]) > 1 {
        w.pop();
    }
}

/// Stems one lowercase word.
pub fn stem(word: &str) -> String {
    let mut w: Vec<char> = word.to_lowercase().chars().collect();
    if w.is_empty() {
        return String::new();
    }
    step1a(&mut w);
    step1b(&mut w);
    step1c(&mut w);
    step2(&mut w);
    step3(&mut w);
    step4(&mut w);
    step5(&mut w);
    w.into_iter().collect()
}
