use expmem::embedding::LocalEmbedder;
use expmem::orchestrator::{build_reference_store, run_suite, EpisodeConfig, SuitePreset};
use expmem::vlm::{Policy, ScriptedVlm, VlmBackend};

fn scripted(p: Policy) -> Box<dyn VlmBackend> {
    Box::new(ScriptedVlm::new(p))
}

fn table(preset: SuitePreset) -> expmem::orchestrator::SuiteTable {
    let emb = LocalEmbedder::default();
    let store = build_reference_store(&scripted, &emb, 0).unwrap();
    let t = run_suite(
        preset.title(),
        &preset.scenarios(),
        &preset.conditions(&EpisodeConfig::default()),
        preset.trials(),
        Some(&store),
        &scripted,
        &emb,
    )
    .unwrap();
    println!("{}", t.render());
    t
}

#[test]
fn long_term_memory_rescues_single_trials() {
    let t = table(SuitePreset::Ltm);
    assert_eq!(t.total_for("no-ltm").unwrap().successes, 0);
    assert_eq!(t.total_for("stm+ltm").unwrap().successes, 12);
}

#[test]
fn ablation_orders_retrieval_modes() {
    let t = table(SuitePreset::Ablation);
    let rate = |c| t.total_for(c).unwrap().rate();
    assert!(rate("rag") > rate("all") && rate("all") > rate("random"), "{}", t.render());
}

#[test]
fn suites_are_reproducible() {
    assert_eq!(table(SuitePreset::Ablation).render(), table(SuitePreset::Ablation).render());
}

#[test]
fn matching_lesson_is_retrieved() {
    use expmem::embedding::Embedder;
    use expmem::orchestrator::{build_key, LTM_SCENARIOS};
    use expmem::world::{observe, Scenario};
    let emb = LocalEmbedder::default();
    let store = build_reference_store(&scripted, &emb, 0).unwrap();
    let vlm = ScriptedVlm::new(Policy::MemoryAware);
    for name in LTM_SCENARIOS {
        let s = Scenario::builtin(name).unwrap();
        let key = build_key(&s.instruction, &observe(&s.reset()), &vlm).unwrap();
        let top = store.retrieve_top_k(&emb.embed(&key.key_text()).unwrap(), 5).unwrap();
        let rank = top.iter().position(|r| r.record.lesson == Some(s.trap));
        println!("{name}: matching lesson at rank {:?}", rank.map(|r| r + 1));
        assert!(rank.is_some(), "{name}");
        if name == "ltm-apple-container" {
            assert_eq!(rank, Some(0));
        }
    }
}
