%matplotlib inline
!pip install seaborn
import seaborn as sns
%%time
sns.heatmap(corr)
