#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dla/page.hpp"
#include "dla/raster.hpp"

namespace dla {

struct CorpusConfig {
    int width = 512;
    int height = 512;
    int min_columns = 1;
    int max_columns = 2;
    int min_paragraph_lines = 2;
    int max_paragraph_lines = 5;
    double graphic_prob = 0.30;
    double caption_prob = 0.75;
    double title_prob = 0.70;
    double author_prob = 0.40;
    double section_prob = 0.30;
    double header_prob = 0.35;
    double footer_prob = 0.35;
    double footnote_prob = 0.20;
    double noise = 0.06;
    std::string vocab = "comp-hrdoc";
};

// Checks probability ranges and line-count ranges; throws ValidationError.
void validate_config(const CorpusConfig& cfg);

struct GeneratedPage {
    DocumentPage ann;
    Raster image;
};

// Pure function of (seed, cfg). Lines render as stroke-textured bands with a
// distinct look per role; graphics render as per-category patterns. Throws
// ValidationError when the page cannot fit a single region.
GeneratedPage generate_page(uint64_t seed, const CorpusConfig& cfg);

// Annotation files: UTF-8 JSON, top level {"pages":[...]}.
std::string export_annotations(const std::vector<DocumentPage>& pages);
void write_annotations(const std::string& path, const std::vector<DocumentPage>& pages);
std::vector<DocumentPage> parse_annotations(const std::string& json_text);
std::vector<DocumentPage> read_annotations(const std::string& path);

struct CocoImportReport {
    std::vector<DocumentPage> pages;
    int clipped_boxes = 0;
    int orphan_lines = 0;  // OCR lines outside every region box
    std::vector<std::string> notes;
};

// COCO-style layout annotations with the 11 DocLayNet categories. Graphical
// categories (Table, Picture, Formula) become graphical objects; the rest
// become text regions whose member lines come from per-image "text_lines"
// OCR records when present, one synthetic line per region otherwise.
// Reading order is normalized to column-major geometric order.
CocoImportReport import_coco_layout(const std::string& json_text);

} // namespace dla
