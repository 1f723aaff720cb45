mod common;

use common::*;
use embcat::embedding::{
    detect_format, detect_format_from_bytes, read_embeddings, read_embeddings_from, write_embeddings_to,
    DuplicatePolicy, EmbeddingError, EmbeddingFormat, EmbeddingTable, LookupPolicy, Normalization, RandomBackfill,
    ReadOptions,
};

fn read(bytes: &[u8], format: EmbeddingFormat, opts: &ReadOptions) -> Result<EmbeddingTable, EmbeddingError> {
    read_embeddings_from(bytes, format, opts).map(|l| l.table)
}

fn w2v(header: &str, records: &[(&str, &[f32])], newline: bool) -> Vec<u8> {
    let mut out = header.as_bytes().to_vec();
    for (w, v) in records {
        out.extend_from_slice(w.as_bytes());
        out.push(b' ');
        for x in *v {
            out.extend_from_slice(&x.to_le_bytes());
        }
        if newline {
            out.push(b'\n');
        }
    }
    out
}

#[test]
fn glove_tokens_after_the_first_may_contain_spaces() {
    let t = read(
        b"at&t -1 2\nnew york 0.5 1\n",
        EmbeddingFormat::GloveText,
        &ReadOptions::default(),
    )
    .unwrap();
    assert_eq!(t.words(), ["at&t", "new york"]);
    assert_eq!(t.get("new york"), Some(&[0.5f32, 1.0][..]));
}

#[test]
fn glove_width_error_reports_line() {
    let err = read(b"a 1 2 3\nb 1 2\n", EmbeddingFormat::GloveText, &ReadOptions::default()).unwrap_err();
    assert!(
        matches!(
            err,
            EmbeddingError::InconsistentWidth {
                line: 2,
                expected: 3,
                ..
            }
        ),
        "{err}"
    );
}

#[test]
fn glove_header_is_detected_and_checked() {
    let bytes = b"2 3\na 1 0 0\nb 0 1 0\n";
    assert_eq!(
        detect_format_from_bytes(bytes).unwrap(),
        EmbeddingFormat::GloveTextWithHeader
    );
    let t = read(bytes, EmbeddingFormat::GloveTextWithHeader, &ReadOptions::default()).unwrap();
    assert_eq!((t.len(), t.dim()), (2, 3));

    let short = b"3 3\na 1 0 0\nb 0 1 0\n";
    let lenient = read_embeddings_from(
        &short[..],
        EmbeddingFormat::GloveTextWithHeader,
        &ReadOptions::default(),
    )
    .unwrap();
    assert_eq!(lenient.stats.header_mismatch, Some((3, 2)));
    let strict = ReadOptions {
        strict: true,
        ..Default::default()
    };
    assert!(matches!(
        read(short, EmbeddingFormat::GloveTextWithHeader, &strict),
        Err(EmbeddingError::CountMismatch { declared: 3, found: 2 })
    ));
}

#[test]
fn duplicates_keep_first_or_error() {
    let bytes = b"a 1 1\nb 2 2\na 3 3\n";
    let loaded = read_embeddings_from(&bytes[..], EmbeddingFormat::GloveText, &ReadOptions::default()).unwrap();
    assert_eq!(loaded.stats.duplicates, 1);
    assert_eq!(loaded.table.get("a"), Some(&[1.0f32, 1.0][..]));
    let opts = ReadOptions {
        duplicates: DuplicatePolicy::Error,
        ..Default::default()
    };
    assert!(matches!(
        read(bytes, EmbeddingFormat::GloveText, &opts),
        Err(EmbeddingError::DuplicateToken { .. })
    ));
}

#[test]
fn w2v_truncation_is_an_error() {
    let mut bytes = w2v("2 2\n", &[("a", &[1.0, 2.0]), ("b", &[3.0, 4.0])], true);
    bytes.truncate(bytes.len() - 3);
    let err = read(&bytes, EmbeddingFormat::Word2VecBinary, &ReadOptions::default()).unwrap_err();
    assert!(matches!(err, EmbeddingError::Truncated { .. }), "{err}");
}

#[test]
fn w2v_fewer_records_than_declared() {
    let bytes = w2v("3 2\n", &[("a", &[1.0, 2.0]), ("b", &[3.0, 4.0])], true);
    let loaded = read_embeddings_from(&bytes[..], EmbeddingFormat::Word2VecBinary, &ReadOptions::default()).unwrap();
    assert_eq!(loaded.table.len(), 2);
    assert_eq!(loaded.stats.header_mismatch, Some((3, 2)));
    let strict = ReadOptions {
        strict: true,
        ..Default::default()
    };
    assert!(read(&bytes, EmbeddingFormat::Word2VecBinary, &strict).is_err());
}

#[test]
fn fixtures_are_detected() {
    assert_eq!(
        detect_format(&fixture("tiny.glove")).unwrap(),
        EmbeddingFormat::GloveText
    );
    assert_eq!(
        detect_format(&fixture("emb_a.glove")).unwrap(),
        EmbeddingFormat::GloveText
    );
    assert_eq!(
        detect_format(&fixture("emb_b.bin")).unwrap(),
        EmbeddingFormat::Word2VecBinary
    );
    let loaded = read_embeddings(
        &fixture("emb_b.bin"),
        EmbeddingFormat::Word2VecBinary,
        &ReadOptions::default(),
    )
    .unwrap();
    assert_eq!(loaded.table.name(), "emb_b");
    assert_eq!(loaded.table.dim(), 3);
}

#[test]
fn writer_rejects_unwritable_tokens() {
    let t = EmbeddingTable::new("t", 1, vec!["has space".into()], vec![1.0]).unwrap();
    for format in [EmbeddingFormat::GloveText, EmbeddingFormat::Word2VecBinary] {
        assert!(write_embeddings_to(&t, &mut Vec::new(), format).is_err());
    }
}

#[test]
fn table_rejects_bad_shapes() {
    assert!(EmbeddingTable::new("t", 0, vec![], vec![]).is_err());
    assert!(EmbeddingTable::new("t", 2, vec!["a".into()], vec![1.0]).is_err());
    assert!(EmbeddingTable::new("t", 1, vec!["a".into()], vec![f32::NAN]).is_err());
}

#[test]
fn lookup_chain_falls_back_to_lowercase() {
    let t = EmbeddingTable::new("t", 1, vec!["Paris".into(), "eu".into()], vec![1.0, 2.0]).unwrap();
    let chain = LookupPolicy::lowercase_chain();
    assert_eq!(chain.lookup(&t, "Paris"), Some((&[1.0f32][..], Normalization::Exact)));
    assert_eq!(chain.lookup(&t, "EU"), Some((&[2.0f32][..], Normalization::Lowercase)));
    assert_eq!(chain.lookup(&t, "PARIS"), None);
    assert_eq!(LookupPolicy::exact().lookup(&t, "EU"), None);
    assert_eq!("exact,lowercase".parse::<LookupPolicy>().unwrap(), chain);
    assert!("".parse::<LookupPolicy>().is_err());
}

#[test]
fn backfill_is_deterministic_and_bounded() {
    let b = RandomBackfill::with_seed(9);
    let v = b.vector("glove", "zyzzyva", 50);
    assert_eq!(v, RandomBackfill::with_seed(9).vector("glove", "zyzzyva", 50));
    assert_ne!(v, RandomBackfill::with_seed(10).vector("glove", "zyzzyva", 50));
    assert_ne!(v, b.vector("senna", "zyzzyva", 50));
    assert!(v.iter().all(|x| (-0.25..0.25).contains(x)));
    assert!(RandomBackfill::new(0, 1.0, -1.0).is_err());
}
