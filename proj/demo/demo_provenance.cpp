// Small in-memory walk through the library: synthesize a corpus, index it,
// answer one provenance query and score the result.
//
//   demo_provenance [graphs] [distractors] [out.dot]

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "provenance/provenance.hpp"

using namespace provenance;

int main(int argc, char** argv) {
    SynthSpec spec;
    spec.graphs = argc > 1 ? std::stoul(argv[1]) : 3;
    spec.distractors = argc > 2 ? std::stoul(argv[2]) : 100;
    spec.image_size = 192;
    const std::string dot_path = argc > 3 ? argv[3] : "demo_graph.dot";

    const SynthCorpus corpus = synthesize(spec);
    std::vector<GrayImage> images;
    std::vector<ImageId> ids;
    for (const auto& im : corpus.images) {
        images.push_back(im.image);
        ids.push_back(im.id);
    }
    std::cout << "corpus: " << images.size() << " images, " << corpus.cases.size() << " provenance cases\n";

    PipelineConfig cfg = preset_config("dsurf-if");
    cfg.filter.rank_k = 50;
    const auto features = extract_all(images, ids, cfg.detector);
    const IvfadcIndex index = build_index(features, cfg.index);
    std::cout << "index: " << index.n_features() << " features\n";

    auto feature_of = [&](ImageId id) -> const FeatureSet& { return features[id]; };
    auto image_of = [&](ImageId id) -> const GrayImage& { return images[id]; };

    std::vector<GroundTruthCase> truths;
    std::vector<CaseResult> results;
    for (const auto& c : corpus.cases) {
        const auto& truth = c.truth;
        CaseResult r;
        r.rank = retrieve(features[truth.query], index, feature_of, cfg.filter, cfg.iterative, truth.query);
        std::vector<ImageId> retrieved;
        for (const auto& entry : *r.rank) retrieved.push_back(entry.image_id);
        const auto analysis = build_matrices(0, make_candidates(truth.query, retrieved, image_of, feature_of), cfg.match);
        r.graph = clustered_expansion(analysis, cfg.expansion);
        truths.push_back(truth);
        results.push_back(std::move(r));
    }

    const SuiteReport report = evaluate_suite(truths, results);
    write_report_csv(std::cout, report);

    std::ofstream dot(dot_path);
    write_dot(dot, *results.front().graph);
    std::cout << "graph for " << truths.front().name << " written to " << dot_path << "\n";
}
