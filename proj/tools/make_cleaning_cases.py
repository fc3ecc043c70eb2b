#!/usr/bin/env python3
"""Writes tests/fixtures/cleaning_cases.json.

Expected outputs come from Python's re module applied to the grammar in
docs/cleaning_grammar.md, independent of both C++ implementations.
"""
import json
import pathlib
import re

IMG_HTML = re.compile(r"<[iI][mM][gG](?:[ \t\r\f\v][^<>\n]*)?/?>")
IMG_MD = re.compile(r"!\[[^\]\n]*\]\([^)\n]*\)")
TAG = re.compile(r"</?[A-Za-z][A-Za-z0-9-]*(?:[ \t\r\f\v][^<>\n]*)?/?>")
FRAME = re.compile(r"^[ \t]*at[ \t]+[A-Za-z_$][A-Za-z0-9_$.<>`+/]*[ \t]*(?:\([^()]*\))?(?:[ \t]+in[ \t].*|[ \t\r]*)$")


def clean(text):
    images = tags = blocks = 0
    while True:
        removed = 0
        for pat in (IMG_HTML, IMG_MD):
            text, n = pat.subn("", text)
            images += n
            removed += n
        text, n = TAG.subn("", text)
        tags += n
        removed += n
        if removed == 0:
            break
    lines = text.split("\n")
    keep = []
    i = 0
    while i < len(lines):
        j = i
        while j < len(lines) and FRAME.match(lines[j]):
            j += 1
        if j - i >= 2:
            blocks += 1
            i = j
            continue
        if j == i:
            keep.append(lines[i])
            i += 1
        else:
            keep.extend(lines[i:j])
            i = j
    return "\n".join(keep), images, tags, blocks


CASES = [
    ("empty", ""),
    ("plain", "Database timeout on node 7"),
    ("paragraph", "<p>DB timeout</p>"),
    ("bold_inline", "The <b>primary</b> replica lagged"),
    ("attributes", '<div class="alert" id="x">Backlog &gt; 1M</div>'),
    ("self_closing_br", "line one<br/>line two<br />line three"),
    ("nested_brackets", "<<b>p>"),
    ("nested_deeper", "a<<<i>b>c>d"),
    ("closing_only", "</span>trailing"),
    ("hyphen_tag", "<my-widget data-x=1>value</my-widget>"),
    ("uppercase_tag", "<DIV>Upper</DIV>"),
    ("less_than_math", "latency < 200ms and > 100ms"),
    ("heart", "we <3 uptime"),
    ("digit_tag", "<1a>not a tag"),
    ("tag_across_newline", "<p\nclass=x>kept"),
    ("unclosed_tag", "<p class=x"),
    ("html_img", '<img src="https://dash/mem.png" alt="mem">'),
    ("html_img_self_closing", "before<img/>after"),
    ("html_img_upper", '<IMG SRC="x.png">caption'),
    ("imgx_is_tag", "<imgx>text"),
    ("img_no_space_attr", '<img"x">kept?'),
    ("markdown_image", "![error graph](https://dash/graphs/tls.png)"),
    ("markdown_link_kept", "[runbook](https://wiki/runbook)"),
    ("markdown_image_inline", "see ![a](b.png) and ![](c.png) now"),
    ("markdown_image_newline_alt", "![two\nlines](x.png)"),
    ("markdown_image_in_tag", "<p>![g](g.png)</p>"),
    ("image_splice", "<im<b>g src=x>"),
    ("entities_kept", "&lt;p&gt; stays &amp; so do these"),
    ("java_trace", "Error while saving\n   at Foo.bar(File.java:10)\n   at Foo.baz(File.java:20)\n   at Main.main(Main.java:5)\nRestart fixed it"),
    ("lone_frame_kept", "Summary\nat Foo.bar(File.java:10)\nend"),
    ("dotnet_in_suffix", "Boom\n   at Contoso.Data.Pool.Open() in D:\\src\\Pool.cs:line 88\n   at Contoso.Api.Orders.Get(Orders.cs:41)"),
    ("go_frames_no_parens", "panic\nat kubelet.syncLoop\nat kubelet.Run\ndone"),
    ("tab_indent", "x\n\tat A.b(A.java:1)\n\tat A.c(A.java:2)\ny"),
    ("crlf_frames", "x\r\nat A.b(A.java:1)\r\nat A.c(A.java:2)\r\ny"),
    ("two_blocks", "a\nat A.b(x)\nat A.c(y)\nmid\nat B.b(x)\nat B.c(y)\nz"),
    ("trace_at_start", "at A.b(x)\nat A.c(y)\ntail"),
    ("trace_at_end_newline", "head\nat A.b(x)\nat A.c(y)\n"),
    ("only_trace", "at A.b(x)\nat A.c(y)"),
    ("not_frame_prose", "look at this\nat least twice"),
    ("frame_generic", "x\nat java.util.List<String>.get(List.java:3)\nat $Proxy12.invoke(Unknown Source)\ny"),
    ("frame_trailing_text", "x\nat A.b(x) extra\nat A.c(y) extra\ny"),
    ("frame_nested_parens", "x\nat A.b(f(1))\nat A.c(y)\ny"),
    ("frame_spaces_before_paren", "x\nat A.b   (File.java:1)\nat A.c (File.java:2)\ny"),
    ("tags_then_trace", "<p>Crash</p>\n<code>at A.b(x)</code>\n<code>at A.c(y)</code>\nafter"),
    ("trace_with_image_line", "x\nat A.b(x)\n![i](i.png)\nat A.c(y)\ny"),
    ("unicode_text", "<p>Überlastung im Rechenzentrum – 東京</p>"),
    ("blank_lines_kept", "a\n\n<br>\n\nb"),
    ("script_like", "<script>alert(1)</script>done"),
    ("comment_kept", "<!-- note -->text"),
    ("mixed_everything", '<div><img src="a.png">Users see 500s.</div>\n![g](g.png)\n   at Svc.Handler.Run(Handler.cs:9)\n   at Svc.Host.Main(Host.cs:3)\n<b>Owner</b>: payments'),
]


def main():
    assert len(CASES) == 50, len(CASES)
    out = []
    for name, text in CASES:
        cleaned, images, tags, blocks = clean(text)
        out.append({"name": name, "input": text, "expected": cleaned,
                    "image_refs": images, "html_tags": tags, "stacktrace_blocks": blocks})
    root = pathlib.Path(__file__).resolve().parent.parent
    path = root / "tests" / "fixtures" / "cleaning_cases.json"
    path.write_text(json.dumps(out, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
