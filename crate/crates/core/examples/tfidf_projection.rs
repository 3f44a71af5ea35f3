//! TF-IDF features and their seeded random projection to dense vectors.
//!
//! cargo run --example tfidf_projection

use al_harness::features::{project_dense, TfidfOptions, Vocabulary};

fn main() -> al_harness::Result<()> {
    let texts = [
        "thanks for fixing the citation",
        "you are an idiot and a liar",
        "please add a source for this claim",
        "what an idiot, revert this garbage",
    ];
    let vocab = Vocabulary::fit(&texts, TfidfOptions::default())?;
    println!("{} terms from {} documents, hash {}", vocab.len(), vocab.n_docs(), &vocab.content_hash()[..12]);
    for w in ["idiot", "the", "source"] {
        println!("  {w:<7} df {} idf {:.4}", vocab.df(w).unwrap_or(0), vocab.idf(w).unwrap_or(0.0));
    }

    let rows: Vec<_> = texts.iter().map(|t| vocab.transform(t)).collect();
    let dense: Vec<_> = rows.iter().map(|r| project_dense(r, 256, 7)).collect();
    println!("pair   cosine   sparse dist   projected dist");
    for (i, j) in [(0, 2), (1, 3), (0, 1)] {
        let sparse = (2.0 - 2.0 * rows[i].dot(&rows[j])).max(0.0).sqrt();
        println!(
            "{i}-{j}    {:.4}   {sparse:.4}        {:.4}",
            rows[i].dot(&rows[j]),
            dense[i].distance(&dense[j])
        );
    }
    assert_eq!(project_dense(&rows[0], 256, 7), dense[0]);
    Ok(())
}
