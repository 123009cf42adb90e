# Builds fixtures/text/docs_corpus.tsv from English prose shipped with CPython
# (pydoc topic pages and stdlib docstrings). Run from the repository root.
import re, ast, os, pydoc_data.topics as t
def paragraphs():
    for key in sorted(t.topics):
        yield from re.split(r'\n\s*\n', t.topics[key])
    root='/usr/lib/python3.10'
    for dp, dn, fn in sorted(os.walk(root)):
        dn.sort()
        if any(x in dp for x in ('test','idlelib','lib2to3','site-packages','dist-packages','turtledemo')): continue
        for f in sorted(fn):
            if not f.endswith('.py'): continue
            try: tree=ast.parse(open(os.path.join(dp,f),encoding='utf-8').read())
            except Exception: continue
            for node in ast.walk(tree):
                if isinstance(node,(ast.Module,ast.FunctionDef,ast.ClassDef,ast.AsyncFunctionDef)):
                    d=ast.get_docstring(node)
                    if d: yield from re.split(r'\n\s*\n', d)
sents=[]; seen=set()
for p in paragraphs():
    lines=[l.strip() for l in p.split('\n')]
    if any(('::=' in l or l.startswith(('>>>','...','$','#'))) for l in lines): continue
    p=' '.join(lines)
    p=re.sub(r'^[*\-+] ','',p)
    p=re.sub(r'\*([A-Za-z][A-Za-z ]*)\*', r'\1', p)
    p=re.sub(r'\s+',' ',p)
    for s in re.split(r'(?<=[.?!])\s+(?=[A-Z])', p):
        s=s.strip()
        if not s.endswith('.') or not s[0].isupper(): continue
        if re.search(r'[`"\[\]{}<>=_*#/\\@%$~^|]', s): continue
        if re.search(r'\.\w', s): continue
        w=s[:-1].split()
        if not (5 <= len(w) <= 22): continue
        if any(not re.fullmatch(r"\(?[A-Za-z][A-Za-z'\-]*[,;:)]*\)?[,;:]?", x) for x in w): continue
        if sum(1 for x in w if x[0].isupper()) > len(w)//2: continue
        if s in seen: continue
        seen.add(s); sents.append(s)
print(len(sents))


# Shuffle and assign splits: 500 probe, 600 val, remainder train.
import random
rng = random.Random(20230611)
rng.shuffle(sents)
rows = []
for i, x in enumerate(sents):
    split = 'probe' if i < 500 else ('val' if i < 1100 else 'train')
    rows.append(f"doc{i:05d}\tgeneric\t{split}\t{x}")
open('fixtures/text/docs_corpus.tsv', 'w').write('\n'.join(rows) + '\n')
