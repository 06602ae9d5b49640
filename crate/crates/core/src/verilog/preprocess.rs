//! Source normalization run before lexing.
//!
//! Compiler directive lines (`` `timescale``, `` `define`` ...) and attribute
//! instances `(* ... *)` are blanked out. Blanking keeps every remaining
//! character at its original line and column.

pub fn normalize(src: &str) -> String {
    let bytes = src.as_bytes();
    let mut out = bytes.to_vec();
    let mut i = 0;
    let mut line_start = true;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                    if bytes[i] == b'\n' {
                        line_start = true;
                    }
                    i += 1;
                }
                i = (i + 2).min(bytes.len());
                continue;
            }
            b'"' => {
                i += 1;
                while i < bytes.len() && bytes[i] != b'"' && bytes[i] != b'\n' {
                    if bytes[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
                i += 1;
                line_start = false;
                continue;
            }
            b'`' if line_start => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    blank(&mut out, i);
                    i += 1;
                }
                continue;
            }
            b'(' if bytes.get(i + 1) == Some(&b'*') && is_attribute_start(bytes, i) => {
                let start = i;
                let mut j = i + 2;
                while j + 1 < bytes.len() && !(bytes[j] == b'*' && bytes[j + 1] == b')') {
                    j += 1;
                }
                let end = (j + 2).min(bytes.len());
                for k in start..end {
                    blank(&mut out, k);
                }
                i = end;
                line_start = false;
                continue;
            }
            b'\n' => line_start = true,
            b' ' | b'\t' | b'\r' => {}
            _ => line_start = false,
        }
        i += 1;
    }
    String::from_utf8(out).expect("blanking preserves UTF-8 validity")
}

fn blank(out: &mut [u8], i: usize) {
    if out[i] != b'\n' {
        // Continuation bytes of multibyte characters become spaces as well,
        // so the whole character disappears.
        out[i] = b' ';
    }
}

/// `(*` opens an attribute unless it is the `@(*)` sensitivity form.
fn is_attribute_start(bytes: &[u8], i: usize) -> bool {
    let mut j = i + 2;
    while j < bytes.len() && bytes[j].is_ascii_whitespace() {
        j += 1;
    }
    if bytes.get(j) == Some(&b')') {
        return false;
    }
    let mut k = i;
    while k > 0 && bytes[k - 1].is_ascii_whitespace() {
        k -= 1;
    }
    !(k > 0 && bytes[k - 1] == b'@')
}
