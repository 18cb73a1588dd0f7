// Writes the bundled synthetic fixture: 20 templates with 3 examples each,
// 300 memes (mostly noisy template copies, some off-template), 16-d image
// and 8-d text vectors, 3 labels, original tags 180/60/60.
//
//   make_fixture <out-dir> [seed]
//
// The checked-in copy under tests/data/fixture was produced with seed 2024.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "memekit/memekit.hpp"

namespace {

using namespace memekit;

constexpr std::size_t kTemplates = 20;
constexpr std::size_t kExamplesPer = 3;
constexpr std::size_t kMemes = 300;
constexpr std::size_t kImageDim = 16;
constexpr std::size_t kTextDim = 8;

std::vector<float> jitter(const std::vector<float>& centre, double sigma, Rng& rng) {
    std::vector<float> out(centre.size());
    for (std::size_t i = 0; i < centre.size(); ++i) out[i] = static_cast<float>(centre[i] + sigma * rng.normal());
    return out;
}

std::vector<float> gaussian(std::size_t dim, double sigma, Rng& rng) {
    return jitter(std::vector<float>(dim, 0.0f), sigma, rng);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: make_fixture <out-dir> [seed]\n";
        return 2;
    }
    const std::filesystem::path out = argv[1];
    const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 2024;
    std::filesystem::create_directories(out);
    Rng rng(seed);

    TaskMeta task;
    task.label_names = {"offensive", "neutral", "humorous"};
    task.multilabel = false;
    task.eval_average = Average::macro;

    // KB: template rows first, then each template's examples
    std::vector<std::vector<float>> image_centres, text_centres;
    EmbeddingMatrix kb_image, kb_text;
    for (std::size_t t = 0; t < kTemplates; ++t) {
        image_centres.push_back(gaussian(kImageDim, 4.0, rng));
        text_centres.push_back(gaussian(kTextDim, 4.0, rng));
        kb_image.push_back(image_centres.back());
        kb_text.push_back(text_centres.back());
    }
    KnowledgeBase kb;
    for (std::size_t t = 0; t < kTemplates; ++t) {
        TemplateRecord rec;
        rec.template_id = "tpl-" + std::string(t < 10 ? "0" : "") + std::to_string(t);
        rec.title = "Template " + std::to_string(t);
        rec.about = "Synthetic template number " + std::to_string(t) + ".";
        rec.source_url = "https://example.invalid/memes/" + rec.template_id;
        rec.image_row = t;
        rec.text_row = t;
        rec.example_text_rows.emplace();
        for (std::size_t e = 0; e < kExamplesPer; ++e) {
            rec.example_image_rows.push_back(kb_image.rows());
            rec.example_text_rows->push_back(kb_text.rows());
            kb_image.push_back(jitter(image_centres[t], 0.35, rng));
            kb_text.push_back(jitter(text_centres[t], 0.35, rng));
        }
        kb.templates.push_back(std::move(rec));
    }

    // each template leans towards one label; two templates never appear
    std::vector<std::size_t> template_label(kTemplates);
    for (std::size_t t = 0; t < kTemplates; ++t) template_label[t] = rng.below(task.n_labels());

    std::vector<std::size_t> tags(kMemes);
    for (std::size_t i = 0; i < kMemes; ++i) tags[i] = i < 180 ? 0 : (i < 240 ? 1 : 2);
    rng.shuffle(std::span<std::size_t>(tags));

    EmbeddingMatrix ds_image, ds_text;
    std::vector<MemeRecord> memes;
    for (std::size_t i = 0; i < kMemes; ++i) {
        MemeRecord m;
        char id[16];
        std::snprintf(id, sizeof id, "m%03zu", i);
        m.item_id = id;
        std::size_t label;
        if (rng.uniform() < 0.8) {
            const std::size_t t = rng.below(kTemplates - 2);
            ds_image.push_back(jitter(image_centres[t], 0.3, rng));
            ds_text.push_back(jitter(text_centres[t], 0.5, rng));
            label = rng.uniform() < 0.85 ? template_label[t] : rng.below(task.n_labels());
            m.ocr_text = "caption riffing on template " + std::to_string(t);
        } else {
            ds_image.push_back(gaussian(kImageDim, 4.0, rng));
            ds_text.push_back(gaussian(kTextDim, 4.0, rng));
            label = rng.below(task.n_labels());
            m.ocr_text = "one-off caption " + std::to_string(i);
        }
        m.labels = LabelVector::one_hot(task.n_labels(), label);
        m.image_row = ds_image.rows() - 1;
        m.text_row = ds_text.rows() - 1;
        m.original_split = tags[i] == 0 ? OriginalSplit::train : (tags[i] == 1 ? OriginalSplit::val : OriginalSplit::test);
        memes.push_back(std::move(m));
    }

    save_embeddings(out / "kb_image.emb", kb_image);
    save_embeddings(out / "kb_text.emb", kb_text);
    save_kb(out / "kb.json", kb);
    save_embeddings(out / "dataset_image.emb", ds_image);
    save_embeddings(out / "dataset_text.emb", ds_text);
    save_dataset(out / "dataset.jsonl", memes, task);
    write_json_file(out / "task.json", task_to_json(task));
    std::cout << "wrote fixture to " << out.string() << '\n';
    return 0;
}
